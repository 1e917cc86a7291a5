#include "fbst/pipeline/pipeline.hpp"

#include "fbst/core/png_io.hpp"
#include "fbst/errors.hpp"
#include "fbst/nst/params_json.hpp"
#include "fbst/util/parallel.hpp"

#include <cmath>
#include <fstream>

namespace fbst {

AnomalyScoreMap::AnomalyScoreMap(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height <= 0 || width <= 0) throw ArgumentError("score map dimensions must be positive");
  if (values_.size() != static_cast<std::size_t>(height) * width)
    throw ArgumentError("score map value count does not match its dimensions");
  for (double v : values_)
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("score map values must be finite and in [0, 1]");
}

AnomalyScoreMap AnomalyScoreMap::zeros(int height, int width) {
  return AnomalyScoreMap(height, width, std::vector<double>(static_cast<std::size_t>(height) * width, 0.0));
}

BackendKind parse_backend_kind(const std::string& s) {
  if (s == "identity") return BackendKind::identity;
  if (s == "nst") return BackendKind::nst;
  if (s == "cyclegan") return BackendKind::cyclegan;
  throw ArgumentError("unknown backend '" + s + "' (expected identity, nst or cyclegan)");
}

const char* to_string(BackendKind k) {
  switch (k) {
    case BackendKind::identity: return "identity";
    case BackendKind::nst: return "nst";
    case BackendKind::cyclegan: return "cyclegan";
  }
  return "?";
}

BackendKind kind_of(const BackendConfig& c) { return static_cast<BackendKind>(c.index()); }

BackendChoice BackendChoice::of(BackendConfig forward, BackendConfig backward) {
  BackendChoice b{kind_of(forward), kind_of(backward), std::move(forward), std::move(backward)};
  b.validate();
  return b;
}

namespace {

void validate_config(const BackendConfig& c, BackendKind expected, const char* which) {
  if (kind_of(c) != expected)
    throw ArgumentError(std::string(which) + " backend is " + to_string(expected) + " but its config is " +
                        to_string(kind_of(c)));
  if (const auto* n = std::get_if<NstBackend>(&c)) {
    n->params.validate();
  } else if (const auto* g = std::get_if<CycleGanBackend>(&c)) {
    if (!g->model) throw ArgumentError(std::string(which) + " cyclegan backend has no model");
  }
}

nlohmann::json describe(const BackendConfig& c) {
  nlohmann::json j = {{"kind", to_string(kind_of(c))}};
  if (const auto* n = std::get_if<NstBackend>(&c)) {
    j["params"] = n->params;
    j["style"] = n->style_label;
  } else if (const auto* g = std::get_if<CycleGanBackend>(&c)) {
    j["direction"] = to_string(g->direction);
    j["model"] = g->model_label;
    if (g->model) {
      j["arch"] = g->model->arch();
      j["group_id"] = to_string(g->model->meta().group_id);
      j["epoch"] = g->model->meta().epochs_completed;
      j["seed"] = g->model->meta().seed;
    }
  }
  return j;
}

nlohmann::json resize_json(const std::optional<ResizeRecord>& r) {
  if (!r) return nullptr;
  return {{"from", {r->from_height, r->from_width}}, {"to", {r->to_height, r->to_width}}};
}

}  // namespace

void BackendChoice::validate() const {
  validate_config(forward_config, forward, "forward");
  validate_config(backward_config, backward, "backward");
}

nlohmann::json describe(const BackendChoice& b) {
  return {{"forward", describe(b.forward_config)}, {"backward", describe(b.backward_config)}};
}

TransferResult apply_backend(const ImageTensor& image, const BackendConfig& config) {
  if (std::holds_alternative<IdentityBackend>(config)) return {image, std::nullopt};

  if (const auto* n = std::get_if<NstBackend>(&config)) {
    const ImageTensor content = image.with_range(RangeTag::unit);
    const ImageTensor style = n->style ? n->style->with_range(RangeTag::unit) : content;
    if (style.channels() != content.channels())
      throw ArgumentError("style image has " + std::to_string(style.channels()) + " channels, input has " +
                          std::to_string(content.channels()));
    NSTResult r = n->extractor ? nst_optimize(*n->extractor, content, style, n->params)
                               : nst_optimize(content, style, n->params);
    return {r.output.with_range(image.range()), std::nullopt};
  }

  const auto& g = std::get<CycleGanBackend>(config);
  if (!g.model) throw ArgumentError("cyclegan backend has no model");
  const auto& arch = g.model->arch();
  if (image.channels() != 3) throw ArgumentError("cyclegan backend needs an RGB image");
  if (image.height() == arch.image_height && image.width() == arch.image_width)
    return {translate(*g.model, image, g.direction), std::nullopt};
  const ImageTensor unit = image.with_range(RangeTag::unit);
  const ImageTensor out = translate(*g.model, resize(unit, arch.image_height, arch.image_width), g.direction);
  return {resize(out, image.height(), image.width()).with_range(image.range()),
          ResizeRecord{image.height(), image.width(), arch.image_height, arch.image_width}};
}

namespace {

TransferResult staged(const char* stage, const ImageTensor& image, const BackendConfig& config) {
  try {
    return apply_backend(image, config);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

ImageTensor forward_transfer(const ImageTensor& image, const BackendChoice& backend) {
  validate_config(backend.forward_config, backend.forward, "forward");
  return staged("forward", image, backend.forward_config).image;
}

ImageTensor backward_transfer(const ImageTensor& stylized, const BackendChoice& backend) {
  validate_config(backend.backward_config, backend.backward, "backward");
  return staged("backward", stylized, backend.backward_config).image;
}

DiffMetric parse_diff_metric(const std::string& s) {
  if (s == "mean_abs") return DiffMetric::mean_abs;
  if (s == "squared") return DiffMetric::squared;
  throw ArgumentError("unknown difference metric '" + s + "' (expected mean_abs or squared)");
}

const char* to_string(DiffMetric m) { return m == DiffMetric::mean_abs ? "mean_abs" : "squared"; }

AnomalyScoreMap difference_map(const ImageTensor& original, const ImageTensor& reconstruction, DiffMetric metric) {
  if (!(original.tensor().shape() == reconstruction.tensor().shape()))
    throw ArgumentError("difference_map: shape mismatch");
  const ImageTensor ua = original.with_range(RangeTag::unit), ub = reconstruction.with_range(RangeTag::unit);
  const Tensor& a = ua.tensor();
  const Tensor& b = ub.tensor();
  const int c = a.channels(), h = a.height(), w = a.width();
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const auto pa = a.plane(ch), pb = b.plane(ch);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = pa[i] - pb[i];
      out[i] += metric == DiffMetric::mean_abs ? std::abs(d) : d * d;
    }
  }
  for (double& v : out) v = std::min(1.0, v / c);
  return AnomalyScoreMap(h, w, std::move(out));
}

AnomalyScoreMap box_blur(const AnomalyScoreMap& map, int radius) {
  if (radius < 0) throw ArgumentError("blur radius must be nonnegative");
  if (radius == 0) return map;
  const int h = map.height(), w = map.width();
  std::vector<double> out(map.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      int n = 0;
      for (int yy = std::max(0, y - radius); yy <= std::min(h - 1, y + radius); ++yy)
        for (int xx = std::max(0, x - radius); xx <= std::min(w - 1, x + radius); ++xx, ++n) s += map.at(yy, xx);
      out[static_cast<std::size_t>(y) * w + x] = std::min(1.0, s / n);
    }
  return AnomalyScoreMap(h, w, std::move(out));
}

PipelineArtifacts run_pipeline(const SceneRecord& scene, const BackendChoice& backend,
                               const PipelineOptions& options) {
  backend.validate();
  const ImageTensor original = scene.image.with_range(RangeTag::unit);
  TransferResult fwd = staged("forward", original, backend.forward_config);
  TransferResult bwd = staged("backward", fwd.image, backend.backward_config);
  try {
    AnomalyScoreMap map = box_blur(difference_map(original, bwd.image, options.metric), options.blur_radius);
    return {scene.scene_id, original, fwd.image, bwd.image, std::move(map), fwd.resize, bwd.resize};
  } catch (const std::exception& e) {
    throw StageError("difference", e.what());
  }
}

BatchResult run_batch(const std::vector<SceneRecord>& scenes, const BackendChoice& backend,
                      const PipelineOptions& options, int jobs) {
  backend.validate();
  std::vector<std::optional<PipelineArtifacts>> slots(scenes.size());
  std::vector<std::optional<SceneFailure>> errors(scenes.size());
  parallel_for(scenes.size(), jobs, [&](std::size_t i) {
    try {
      slots[i] = run_pipeline(scenes[i], backend, options);
    } catch (const StageError& e) {
      errors[i] = SceneFailure{scenes[i].scene_id, e.stage(), e.what()};
    } catch (const std::exception& e) {
      errors[i] = SceneFailure{scenes[i].scene_id, "pipeline", e.what()};
    }
  });
  BatchResult out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (slots[i]) out.artifacts.push_back(std::move(*slots[i]));
    if (errors[i]) out.failures.push_back(std::move(*errors[i]));
  }
  return out;
}

void save_score_map(const std::filesystem::path& png, const AnomalyScoreMap& map) {
  Raster8 r{map.width(), map.height(), 1, {}};
  r.pixels.reserve(map.size());
  for (double v : map.values()) r.pixels.push_back(static_cast<std::uint8_t>(std::lround(255.0 * v)));
  write_png(png, r);
}

AnomalyScoreMap load_score_map(const std::filesystem::path& png) {
  const Raster8 r = read_png(png, 1);
  std::vector<double> v;
  v.reserve(r.pixels.size());
  for (std::uint8_t p : r.pixels) v.push_back(p / 255.0);
  return AnomalyScoreMap(r.height, r.width, std::move(v));
}

void write_artifacts(const std::filesystem::path& dir, const PipelineArtifacts& a, const BackendChoice& backend,
                     const PipelineOptions& options) {
  std::filesystem::create_directories(dir);
  save_image(dir / "original.png", a.original);
  save_image(dir / "stylized.png", a.stylized.with_range(RangeTag::unit));
  save_image(dir / "reconstruction.png", a.reconstruction.with_range(RangeTag::unit));
  save_score_map(dir / "score_map.png", a.score_map);
  const nlohmann::json j = {{"scene_id", a.scene_id},
                            {"height", a.original.height()},
                            {"width", a.original.width()},
                            {"backend", describe(backend)},
                            {"difference_metric", to_string(options.metric)},
                            {"blur_radius", options.blur_radius},
                            {"forward_resize", resize_json(a.forward_resize)},
                            {"backward_resize", resize_json(a.backward_resize)},
                            {"files",
                             {{"original", "original.png"},
                              {"stylized", "stylized.png"},
                              {"reconstruction", "reconstruction.png"},
                              {"score_map", "score_map.png"}}}};
  std::ofstream out(dir / "artifacts.json", std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (dir / "artifacts.json").string());
}

}  // namespace fbst
