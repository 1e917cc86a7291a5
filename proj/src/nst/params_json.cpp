#include "fbst/nst/params_json.hpp"

#include "fbst/errors.hpp"

namespace fbst {

namespace {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
  }
  return "?";
}

}  // namespace

void to_json(nlohmann::json& j, const ExtractorSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"content_layers", s.content_layers},
                     {"style_layers", s.style_layers},
                     {"mean", s.mean},
                     {"std", s.stddev}};
  if (s.kind == ExtractorKind::tiny_test) {
    j["seed"] = s.seed;
    j["activation"] = activation_name(s.tiny_activation);
    j["zero_bias"] = s.tiny_zero_bias;
  } else {
    j["weights"] = s.weights_path.string();
    j["sha256"] = s.weights_sha256;
  }
}

void from_json(const nlohmann::json& j, ExtractorSpec& s) {
  const ExtractorKind kind = parse_extractor_kind(j.value("kind", std::string(to_string(s.kind))));
  if (kind != s.kind) {
    s = kind == ExtractorKind::tiny_test ? ExtractorSpec::tiny(0) : ExtractorSpec::vgg19({}, {});
  }
  s.content_layers = j.value("content_layers", s.content_layers);
  s.style_layers = j.value("style_layers", s.style_layers);
  s.mean = j.value("mean", s.mean);
  s.stddev = j.value("std", s.stddev);
  s.seed = j.value("seed", s.seed);
  if (j.contains("activation")) s.tiny_activation = parse_activation(j.at("activation").get<std::string>());
  s.tiny_zero_bias = j.value("zero_bias", s.tiny_zero_bias);
  if (j.contains("weights")) s.weights_path = j.at("weights").get<std::string>();
  s.weights_sha256 = j.value("sha256", s.weights_sha256);
}

void to_json(nlohmann::json& j, const NSTParams& p) {
  j = nlohmann::json{{"content_weight", p.content_weight},
                     {"style_weight", p.style_weight},
                     {"iterations", p.iterations},
                     {"step_size", p.step_size},
                     {"init", p.init == NstInit::content ? "content" : "noise"},
                     {"seed", p.seed},
                     {"extractor", p.extractor}};
  if (!p.style_layer_weights.empty()) j["style_layer_weights"] = p.style_layer_weights;
}

void from_json(const nlohmann::json& j, NSTParams& p) {
  p.content_weight = j.value("content_weight", p.content_weight);
  p.style_weight = j.value("style_weight", p.style_weight);
  p.iterations = j.value("iterations", p.iterations);
  p.step_size = j.value("step_size", p.step_size);
  if (j.contains("init")) p.init = parse_nst_init(j.at("init").get<std::string>());
  p.seed = j.value("seed", p.seed);
  if (j.contains("extractor")) j.at("extractor").get_to(p.extractor);
  if (j.contains("style_layer_weights")) p.style_layer_weights = j.at("style_layer_weights").get<LayerWeights>();
}

}  // namespace fbst
