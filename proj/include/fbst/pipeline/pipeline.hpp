#pragma once

#include "fbst/core/image.hpp"
#include "fbst/cyclegan/model.hpp"
#include "fbst/nst/optimize.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace fbst {

// Per-pixel anomaly scores in [0,1].
class AnomalyScoreMap {
 public:
  AnomalyScoreMap(int height, int width, std::vector<double> values);
  static AnomalyScoreMap zeros(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  double at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const AnomalyScoreMap&, const AnomalyScoreMap&) = default;

 private:
  int height_;
  int width_;
  std::vector<double> values_;
};

enum class BackendKind { identity, nst, cyclegan };

BackendKind parse_backend_kind(const std::string& s);
const char* to_string(BackendKind k);

struct IdentityBackend {};

struct NstBackend {
  NSTParams params;
  std::optional<ImageTensor> style;  // empty: the input image is its own style
  std::string style_label = "self";
  std::shared_ptr<const FeatureExtractor> extractor;  // built from params.extractor when null
};

struct CycleGanBackend {
  std::shared_ptr<const TranslationModel> model;
  Direction direction = Direction::b_to_a;
  std::string model_label;
};

using BackendConfig = std::variant<IdentityBackend, NstBackend, CycleGanBackend>;

BackendKind kind_of(const BackendConfig& c);

struct BackendChoice {
  BackendKind forward = BackendKind::identity;
  BackendKind backward = BackendKind::identity;
  BackendConfig forward_config;
  BackendConfig backward_config;

  static BackendChoice of(BackendConfig forward, BackendConfig backward);
  void validate() const;
};

nlohmann::json describe(const BackendChoice& b);

// Records the working size when a backend needed a fixed resolution.
struct ResizeRecord {
  int from_height, from_width, to_height, to_width;
};

struct TransferResult {
  ImageTensor image;
  std::optional<ResizeRecord> resize;
};

// Dispatch to one backend; output has the input's size and range.
TransferResult apply_backend(const ImageTensor& image, const BackendConfig& config);
// Same, with errors wrapped in StageError("forward" / "backward").
ImageTensor forward_transfer(const ImageTensor& image, const BackendChoice& backend);
ImageTensor backward_transfer(const ImageTensor& stylized, const BackendChoice& backend);

enum class DiffMetric { mean_abs, squared };

DiffMetric parse_diff_metric(const std::string& s);
const char* to_string(DiffMetric m);

// Per-pixel mean over channels of |a - b| (or (a - b)^2); both in unit range.
AnomalyScoreMap difference_map(const ImageTensor& original, const ImageTensor& reconstruction,
                               DiffMetric metric = DiffMetric::mean_abs);
// Mean over the (2r+1)^2 window clipped at the borders.
AnomalyScoreMap box_blur(const AnomalyScoreMap& map, int radius);

struct PipelineOptions {
  DiffMetric metric = DiffMetric::mean_abs;
  int blur_radius = 0;
};

struct PipelineArtifacts {
  std::string scene_id;
  ImageTensor original;
  ImageTensor stylized;
  ImageTensor reconstruction;
  AnomalyScoreMap score_map;
  std::optional<ResizeRecord> forward_resize;
  std::optional<ResizeRecord> backward_resize;
};

PipelineArtifacts run_pipeline(const SceneRecord& scene, const BackendChoice& backend,
                               const PipelineOptions& options = {});

struct SceneFailure {
  std::string scene_id;
  std::string stage;
  std::string message;
};

struct BatchResult {
  std::vector<PipelineArtifacts> artifacts;  // input order, failed scenes omitted
  std::vector<SceneFailure> failures;
};

// Scenes run concurrently on up to `jobs` threads; a failing scene is
// recorded and the rest continue.
BatchResult run_batch(const std::vector<SceneRecord>& scenes, const BackendChoice& backend,
                      const PipelineOptions& options = {}, int jobs = 1);

// original.png, stylized.png, reconstruction.png, score_map.png, artifacts.json
void write_artifacts(const std::filesystem::path& dir, const PipelineArtifacts& artifacts,
                     const BackendChoice& backend, const PipelineOptions& options);
AnomalyScoreMap load_score_map(const std::filesystem::path& png);
void save_score_map(const std::filesystem::path& png, const AnomalyScoreMap& map);

}  // namespace fbst
