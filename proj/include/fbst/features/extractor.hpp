#pragma once

#include "fbst/core/image.hpp"
#include "fbst/nn/layers.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace fbst {

enum class ExtractorKind { pretrained_vgg19, tiny_test };

ExtractorKind parse_extractor_kind(const std::string& name);
const char* to_string(ExtractorKind k);

struct ExtractorSpec {
  ExtractorKind kind = ExtractorKind::tiny_test;
  std::vector<std::string> content_layers;
  std::vector<std::string> style_layers;
  std::vector<double> mean;    // per-channel preprocessing
  std::vector<double> stddev;
  std::uint64_t seed = 0;      // tiny_test weights

  // tiny_test only; the linear/zero-bias variant exists for linearity probes
  Activation tiny_activation = Activation::softplus;
  bool tiny_zero_bias = false;

  // pretrained_vgg19 only
  std::filesystem::path weights_path;
  std::string weights_sha256;

  // conv2_1 content, conv{1,2,3}_1 style, mean 0.5 / std 0.5
  static ExtractorSpec tiny(std::uint64_t seed);
  // conv4_2 content, conv{1..5}_1 style, ImageNet statistics
  static ExtractorSpec vgg19(std::filesystem::path weights, std::string sha256);
};

// Named feature maps ordered by extraction depth.
class FeatureBundle {
 public:
  void add(std::string name, Tensor t);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }

  friend bool operator==(const FeatureBundle&, const FeatureBundle&) = default;

 private:
  std::vector<std::pair<std::string, Tensor>> layers_;
};

// Immutable after construction; extract/trace/backward may be called from
// several threads at once.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const ExtractorSpec& spec);

  const ExtractorSpec& spec() const { return spec_; }
  std::vector<std::string> available_layers() const;
  // content_layers followed by style_layers, deduplicated, in depth order
  std::vector<std::string> default_layers() const;

  FeatureBundle extract(const ImageTensor& image) const;
  FeatureBundle extract(const ImageTensor& image, const std::vector<std::string>& layers) const;

  // Differentiable path on raw pixels (C x H x W in [0,1] nominally).
  struct Trace {
    std::vector<Tensor> activations;
    FeatureBundle features;
  };
  Trace trace(const Tensor& pixels, const std::vector<std::string>& layers) const;
  // d(loss)/d(pixels) given d(loss)/d(feature) for some of the traced layers.
  Tensor backward(const Trace& trace, const std::map<std::string, Tensor>& feature_grads) const;

  Shape feature_shape(const std::string& layer, const Shape& input) const;

 private:
  int activation_of(const std::string& layer) const;
  std::vector<std::pair<std::string, int>> resolve(const std::vector<std::string>& layers) const;
  void build_tiny();
  void build_vgg19();
  void load_vgg19_weights();

  ExtractorSpec spec_;
  Sequential net_;
  std::vector<std::pair<std::string, int>> names_;  // layer name -> activation index, depth order
};

// VGG19 weight file: "FBVGG19\x01", uint32 layer count, then per conv layer
// uint32 out, in, kernel followed by float32 weights (out,in,kh,kw order) and
// float32 biases, all little-endian. tools/export_vgg19_weights.py writes it.
void write_vgg19_weights(const std::filesystem::path& path, const std::vector<std::vector<float>>& weights,
                         const std::vector<std::vector<float>>& biases);
// (out, in) channel pairs of the sixteen VGG19 convolutions.
const std::vector<std::pair<int, int>>& vgg19_conv_channels();
const std::vector<std::string>& vgg19_layer_names();

}  // namespace fbst
