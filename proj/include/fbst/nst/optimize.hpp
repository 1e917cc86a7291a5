#pragma once

#include "fbst/features/extractor.hpp"
#include "fbst/nst/losses.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fbst {

enum class NstInit { content, noise };

NstInit parse_nst_init(const std::string& name);

struct NSTParams {
  double content_weight = 1e5;
  double style_weight = 1e5;
  int iterations = 300;
  double step_size = 0.02;  // Adam learning rate in pixel units
  NstInit init = NstInit::content;
  std::uint64_t seed = 0;
  ExtractorSpec extractor = ExtractorSpec::tiny(0);
  LayerWeights style_layer_weights;  // empty: uniform over extractor.style_layers

  void validate() const;
};

struct TraceEntry {
  int iteration;
  double content_loss;
  double style_loss;
  double total_loss;
};

struct NSTResult {
  ImageTensor output;  // iterate with the lowest total loss
  std::vector<TraceEntry> loss_trace;
  double best_total_loss;
  int best_iteration;

  const TraceEntry& best_entry() const { return loss_trace.at(best_iteration); }
};

// Weighted content + style objective on raw pixels, with analytic gradient.
class NstObjective {
 public:
  NstObjective(const FeatureExtractor& extractor, const ImageTensor& content, const ImageTensor& style,
               double content_weight, double style_weight, LayerWeights style_layer_weights = {});

  struct Evaluation {
    double content_loss;
    double style_loss;
    double total_loss;
    Tensor gradient;  // empty when not requested
  };
  Evaluation evaluate(const Tensor& pixels, bool with_gradient = true) const;

 private:
  const FeatureExtractor& extractor_;
  std::vector<std::string> content_layers_;
  LayerWeights style_weights_;
  std::vector<std::string> layers_;
  FeatureBundle content_features_;
  GramMap style_grams_;
  double content_weight_;
  double style_weight_;
};

NSTResult nst_optimize(const ImageTensor& content, const ImageTensor& style, const NSTParams& params);
NSTResult nst_optimize(const FeatureExtractor& extractor, const ImageTensor& content, const ImageTensor& style,
                       const NSTParams& params);

// One run per style weight (strictly increasing), all other settings shared.
std::vector<NSTResult> style_weight_sweep(const ImageTensor& content, const ImageTensor& style, const NSTParams& base,
                                          const std::vector<double>& weights, int jobs = 1);
std::vector<NSTResult> style_weight_sweep(const FeatureExtractor& extractor, const ImageTensor& content,
                                          const ImageTensor& style, const NSTParams& base,
                                          const std::vector<double>& weights, int jobs = 1);

// iteration,content_loss,style_loss,total_loss
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceEntry>& trace);
// <path> PNG plus <path stem>.json holding the parameters and best loss
void write_stylized(const std::filesystem::path& png_path, const NSTResult& result, const NSTParams& params);

}  // namespace fbst
