#pragma once

#include "fbst/features/extractor.hpp"
#include "fbst/nst/optimize.hpp"

#include <json.hpp>

namespace fbst {

// Missing keys keep their defaults when reading.
void to_json(nlohmann::json& j, const ExtractorSpec& s);
void from_json(const nlohmann::json& j, ExtractorSpec& s);
void to_json(nlohmann::json& j, const NSTParams& p);
void from_json(const nlohmann::json& j, NSTParams& p);

}  // namespace fbst
