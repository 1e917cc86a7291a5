#pragma once

#include "fbst/core/dataset.hpp"
#include "fbst/cyclegan/training.hpp"
#include "fbst/nst/optimize.hpp"
#include "fbst/pipeline/pipeline.hpp"

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

namespace fbst {

enum class ExperimentKind { exp1_cyclegan, exp2_nst, exp3_hybrid, toy };

ExperimentKind parse_experiment_kind(const std::string& s);
const char* to_string(ExperimentKind k);

struct DatasetSource {
  std::filesystem::path root;
  DatasetLayout layout = DatasetLayout::flat;
  int limit = 0;  // 0: every scene
};

// Synthetic scenes with pasted objects, used when the experiment is toy.
struct ToyScenes {
  int count = 4;
  int size = 64;
};

// One side of the pipeline. For nst, `style` is a PNG path; empty means a
// synthetic image (toy only). For cyclegan, `checkpoint` is required.
struct BackendSpec {
  BackendKind kind = BackendKind::nst;
  NSTParams nst;
  std::filesystem::path style;
  std::filesystem::path checkpoint;
  std::optional<Direction> direction;  // defaults: forward b_to_a, backward a_to_b
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::toy;
  std::string experiment_id;  // defaults to the experiment name
  std::uint64_t seed = 0;
  int jobs = 1;
  std::filesystem::path output = "fbst_out";
  std::optional<DatasetSource> dataset;
  ToyScenes toy;
  BackendSpec forward;
  BackendSpec backward;
  PipelineOptions pipeline;

  // Sets the global seed; the NST backend seeds derive from it.
  void set_seed(std::uint64_t s);
  // Pairings, referenced paths and parameter ranges; ConfigError on failure.
  void validate() const;
  // Resolved configuration without output/jobs; embedded in reports.
  nlohmann::json snapshot() const;
};

// Relative paths are resolved against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Pretrained extractor path: `override_path`, else FBST_VGG19_WEIGHTS, else
// the configured one. A missing sha256 is read from "<weights>.sha256".
void apply_weights_override(NSTParams& params, const std::filesystem::path& override_path = {});

}  // namespace fbst
