#include "fbst/nst/optimize.hpp"

#include "fbst/core/png_io.hpp"
#include "fbst/errors.hpp"
#include "fbst/nst/params_json.hpp"
#include "fbst/util/parallel.hpp"
#include "fbst/util/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <optional>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace fbst {

NstInit parse_nst_init(const std::string& name) {
  if (name == "content") return NstInit::content;
  if (name == "noise") return NstInit::noise;
  throw ArgumentError("unknown NST init '" + name + "'");
}

void NSTParams::validate() const {
  if (!(content_weight > 0.0) || !std::isfinite(content_weight)) throw ArgumentError("content_weight must be > 0");
  if (!(style_weight >= 0.0) || !std::isfinite(style_weight)) throw ArgumentError("style_weight must be >= 0");
  if (iterations < 1) throw ArgumentError("iterations must be >= 1");
  if (!(step_size > 0.0)) throw ArgumentError("step_size must be > 0");
}

NstObjective::NstObjective(const FeatureExtractor& extractor, const ImageTensor& content, const ImageTensor& style,
                           double content_weight, double style_weight, LayerWeights style_layer_weights)
    : extractor_(extractor),
      content_layers_(extractor.spec().content_layers),
      style_weights_(std::move(style_layer_weights)),
      content_weight_(content_weight),
      style_weight_(style_weight) {
  if (content.channels() != 3 || style.channels() != 3) throw ArgumentError("NST needs 3-channel images");
  if (style_weights_.empty()) style_weights_ = uniform_layer_weights(extractor.spec().style_layers);
  double wsum = 0.0;
  std::vector<std::string> style_layers;
  for (const auto& [l, w] : style_weights_) {
    wsum += w;
    style_layers.push_back(l);
  }
  if (std::abs(wsum - 1.0) > 1e-6) throw ArgumentError("style layer weights must sum to 1");
  if (content_layers_.empty()) throw ArgumentError("extractor spec has no content layers");
  layers_ = content_layers_;
  layers_.insert(layers_.end(), style_layers.begin(), style_layers.end());
  content_features_ = extractor.extract(content, content_layers_);
  style_grams_ = style_grams(extractor.extract(style, style_layers), style_layers);
}

NstObjective::Evaluation NstObjective::evaluate(const Tensor& pixels, bool with_gradient) const {
  const auto trace = extractor_.trace(pixels, layers_);
  const FeatureBundle& f = trace.features;

  Evaluation ev{};
  ev.content_loss = content_loss(f, content_features_, content_layers_);
  ev.style_loss = style_loss(f, style_grams_, style_weights_);
  ev.total_loss = content_weight_ * ev.content_loss + style_weight_ * ev.style_loss;
  if (!with_gradient) return ev;

  std::map<std::string, Tensor> grads;
  const double nc = static_cast<double>(content_layers_.size());
  for (const auto& name : content_layers_) {
    const Tensor& a = f.at(name);
    const Tensor& b = content_features_.at(name);
    Tensor g(a.shape());
    const double scale = content_weight_ * 2.0 / (nc * static_cast<double>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) g[i] = scale * (a[i] - b[i]);
    grads[name] = std::move(g);
  }
  if (style_weight_ != 0.0) {
    for (const auto& [name, w] : style_weights_) {
      const Tensor& a = f.at(name);
      const Eigen::MatrixXd diff = gram_matrix(a) - style_grams_.at(name);
      const Eigen::MatrixXd dgram = (style_weight_ * w * 2.0 / static_cast<double>(diff.size())) * diff;
      Tensor g = gram_backward(a, dgram);
      auto it = grads.find(name);
      if (it == grads.end())
        grads.emplace(name, std::move(g));
      else
        it->second += g;
    }
  }
  ev.gradient = extractor_.backward(trace, grads);
  return ev;
}

NSTResult nst_optimize(const ImageTensor& content, const ImageTensor& style, const NSTParams& params) {
  params.validate();
  const FeatureExtractor extractor(params.extractor);
  return nst_optimize(extractor, content, style, params);
}

NSTResult nst_optimize(const FeatureExtractor& extractor, const ImageTensor& content, const ImageTensor& style,
                       const NSTParams& params) {
  params.validate();
  const ImageTensor content_u = content.to_unit();
  const ImageTensor style_u = style.to_unit();
  const NstObjective objective(extractor, content_u, style_u, params.content_weight, params.style_weight,
                               params.style_layer_weights);

  Param pixels{"pixels", content_u.tensor().storage()};
  if (params.init == NstInit::noise) {
    Rng rng(params.seed);
    for (double& v : pixels.value) v = rng.uniform();
  }
  const Shape shape = content_u.tensor().shape();
  Adam adam(AdamConfig{params.step_size, 0.9, 0.999, 1e-8});
  GradBuffer grads;

  std::vector<TraceEntry> trace;
  trace.reserve(params.iterations);
  std::vector<double> best = pixels.value;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_it = 0;

  for (int it = 0; it < params.iterations; ++it) {
    auto ev = objective.evaluate(Tensor(shape, pixels.value));
    if (!std::isfinite(ev.total_loss) || !ev.gradient.all_finite())
      throw NumericError("non-finite NST loss at iteration " + std::to_string(it));
    trace.push_back({it, ev.content_loss, ev.style_loss, ev.total_loss});
    if (ev.total_loss < best_loss) {
      best_loss = ev.total_loss;
      best = pixels.value;
      best_it = it;
    }
    if (it + 1 == params.iterations) break;
    grads.of(pixels) = std::move(ev.gradient.storage());
    adam.step({&pixels}, grads);
    for (double& v : pixels.value) v = std::clamp(v, 0.0, 1.0);
  }
  return NSTResult{ImageTensor(Tensor(shape, std::move(best)), RangeTag::unit), std::move(trace), best_loss, best_it};
}

std::vector<NSTResult> style_weight_sweep(const ImageTensor& content, const ImageTensor& style, const NSTParams& base,
                                          const std::vector<double>& weights, int jobs) {
  base.validate();
  const FeatureExtractor extractor(base.extractor);
  return style_weight_sweep(extractor, content, style, base, weights, jobs);
}

std::vector<NSTResult> style_weight_sweep(const FeatureExtractor& extractor, const ImageTensor& content,
                                          const ImageTensor& style, const NSTParams& base,
                                          const std::vector<double>& weights, int jobs) {
  if (weights.empty()) throw ArgumentError("style weight sweep needs at least one weight");
  for (std::size_t i = 1; i < weights.size(); ++i)
    if (!(weights[i] > weights[i - 1])) throw ArgumentError("style weights must be strictly increasing");

  std::vector<std::optional<NSTResult>> results(weights.size());
  parallel_for(weights.size(), jobs, [&](std::size_t i) {
    NSTParams p = base;
    p.style_weight = weights[i];
    std::ostringstream tag;
    tag << "style_weight=" << weights[i];
    try {
      results[i] = nst_optimize(extractor, content, style, p);
    } catch (const std::exception& e) {
      throw StageError(tag.str(), e.what());
    }
  });
  std::vector<NSTResult> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceEntry>& trace) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,content_loss,style_loss,total_loss\n";
  out << std::setprecision(17);
  for (const auto& e : trace)
    out << e.iteration << ',' << e.content_loss << ',' << e.style_loss << ',' << e.total_loss << '\n';
}

void write_stylized(const std::filesystem::path& png_path, const NSTResult& result, const NSTParams& params) {
  save_image(png_path, result.output);
  nlohmann::json j;
  j["params"] = params;
  j["best_total_loss"] = result.best_total_loss;
  j["best_iteration"] = result.best_iteration;
  const auto& best = result.best_entry();
  j["best_content_loss"] = best.content_loss;
  j["best_style_loss"] = best.style_loss;
  auto sidecar = png_path;
  sidecar.replace_extension(".json");
  std::ofstream out(sidecar);
  if (!out) throw IoError("cannot write " + sidecar.string());
  out << j.dump(2) << '\n';
}

}  // namespace fbst
