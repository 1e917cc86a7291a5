#pragma once

#include "fbst/core/image.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fbst {

enum class BasePattern { gradient, stripes, checker };
enum class AnomalyShape { none, square, disk };

BasePattern parse_base_pattern(const std::string& name);
AnomalyShape parse_anomaly_shape(const std::string& name);

// Desk-scale stand-in for a road scene with a pasted unknown object.
struct SyntheticSceneSpec {
  BasePattern base_pattern = BasePattern::gradient;
  AnomalyShape anomaly_shape = AnomalyShape::none;
  double anomaly_fraction = 0.05;  // (0, 0.2]; ignored for AnomalyShape::none
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  std::string scene_id;  // defaults to "synthetic_<seed>"
};

// Base pattern only, exactly as synthesize_scene renders it under the object.
ImageTensor render_base_pattern(const SyntheticSceneSpec& spec);

// Base channel values stay in [0, 0.6]; the object colour has one channel at
// 1.0, so every anomalous pixel deviates from the background by >= 0.4.
SceneRecord synthesize_scene(const SyntheticSceneSpec& spec);

// `count` scenes cycling through the base patterns with a square or disk
// object each; ids synthetic_000.. and the last eval_fraction marked eval.
std::vector<SceneRecord> synthesize_dataset(int count, std::uint64_t seed, int height = 64, int width = 64,
                                            double eval_fraction = 0.2);

// Full-range swirl texture standing in for an artwork style image.
ImageTensor synthesize_style_image(std::uint64_t seed, int height = 64, int width = 64);

}  // namespace fbst
