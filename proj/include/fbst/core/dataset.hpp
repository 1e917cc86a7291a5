#pragma once

#include "fbst/core/image.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fbst {

enum class DatasetLayout { flat, cityscapes_like };

DatasetLayout parse_layout(const std::string& name);

struct RecordError {
  std::string scene_id;
  std::string message;
};

// loaded + skipped == files_scanned
struct LoadSummary {
  int files_scanned = 0;
  int loaded = 0;
  int skipped = 0;
  std::vector<std::string> warnings;
  std::vector<RecordError> errors;
};

struct Dataset {
  std::vector<SceneRecord> records;  // sorted by scene_id
  LoadSummary summary;
};

// Layouts:
//   flat:            <root>/images/<id>.png, optional <root>/masks/<id>.png
//   cityscapes_like: <root>/leftImg8bit/<split>/<city>/<id>_leftImg8bit.png,
//                    masks at the same relative path under <root>/masks/
// Throws ConfigError when the root (or its image directory) does not exist.
Dataset load_dataset(const std::filesystem::path& root, DatasetLayout layout, int jobs = 1);

}  // namespace fbst
