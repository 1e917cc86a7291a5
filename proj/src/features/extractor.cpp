#include "fbst/features/extractor.hpp"

#include "fbst/errors.hpp"
#include "fbst/util/hash.hpp"
#include "fbst/util/random.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fbst {

namespace {

constexpr char kVggMagic[8] = {'F', 'B', 'V', 'G', 'G', '1', '9', '\x01'};

constexpr const char* kWeightsHelp =
    "Export torchvision's ImageNet VGG19 weights with\n"
    "  python tools/export_vgg19_weights.py --output vgg19.fbw\n"
    "(requires torch + torchvision and network access once), then point the\n"
    "extractor at the file via the config, --weights, or FBST_VGG19_WEIGHTS and\n"
    "record the printed sha256 in the config.";

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

}  // namespace

ExtractorKind parse_extractor_kind(const std::string& name) {
  if (name == "pretrained_vgg19" || name == "vgg19") return ExtractorKind::pretrained_vgg19;
  if (name == "tiny_test" || name == "tiny") return ExtractorKind::tiny_test;
  throw ArgumentError("unknown extractor kind '" + name + "'");
}

const char* to_string(ExtractorKind k) {
  return k == ExtractorKind::pretrained_vgg19 ? "pretrained_vgg19" : "tiny_test";
}

ExtractorSpec ExtractorSpec::tiny(std::uint64_t seed) {
  ExtractorSpec s;
  s.kind = ExtractorKind::tiny_test;
  s.content_layers = {"conv2_1"};
  s.style_layers = {"conv1_1", "conv2_1", "conv3_1"};
  s.mean = {0.5, 0.5, 0.5};
  s.stddev = {0.5, 0.5, 0.5};
  s.seed = seed;
  return s;
}

ExtractorSpec ExtractorSpec::vgg19(std::filesystem::path weights, std::string sha256) {
  ExtractorSpec s;
  s.kind = ExtractorKind::pretrained_vgg19;
  s.content_layers = {"conv4_2"};
  s.style_layers = {"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"};
  s.mean = {0.485, 0.456, 0.406};
  s.stddev = {0.229, 0.224, 0.225};
  s.weights_path = std::move(weights);
  s.weights_sha256 = std::move(sha256);
  return s;
}

void FeatureBundle::add(std::string name, Tensor t) { layers_.emplace_back(std::move(name), std::move(t)); }

bool FeatureBundle::contains(const std::string& name) const {
  return std::any_of(layers_.begin(), layers_.end(), [&](const auto& p) { return p.first == name; });
}

const Tensor& FeatureBundle::at(const std::string& name) const {
  for (const auto& [n, t] : layers_)
    if (n == name) return t;
  throw ArgumentError("feature bundle has no layer '" + name + "'");
}

const std::vector<std::pair<int, int>>& vgg19_conv_channels() {
  static const std::vector<std::pair<int, int>> c = {
      {64, 3},    {64, 64},   {128, 64},  {128, 128}, {256, 128}, {256, 256}, {256, 256}, {256, 256},
      {512, 256}, {512, 512}, {512, 512}, {512, 512}, {512, 512}, {512, 512}, {512, 512}, {512, 512}};
  return c;
}

const std::vector<std::string>& vgg19_layer_names() {
  static const std::vector<std::string> n = {"conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2",
                                             "conv3_3", "conv3_4", "conv4_1", "conv4_2", "conv4_3", "conv4_4",
                                             "conv5_1", "conv5_2", "conv5_3", "conv5_4"};
  return n;
}

FeatureExtractor::FeatureExtractor(const ExtractorSpec& spec) : spec_(spec) {
  if (spec_.mean.size() != 3 || spec_.stddev.size() != 3)
    throw ArgumentError("preprocessing needs three per-channel means and stddevs");
  net_.add(std::make_unique<ChannelNormalize>(spec_.mean, spec_.stddev));
  if (spec_.kind == ExtractorKind::tiny_test)
    build_tiny();
  else
    build_vgg19();

  const auto avail = available_layers();
  for (const auto& l : spec_.content_layers)
    if (std::find(avail.begin(), avail.end(), l) == avail.end())
      throw ArgumentError("unknown content layer '" + l + "'; available: " + join(avail));
  for (const auto& l : spec_.style_layers)
    if (std::find(avail.begin(), avail.end(), l) == avail.end())
      throw ArgumentError("unknown style layer '" + l + "'; available: " + join(avail));
}

void FeatureExtractor::build_tiny() {
  Rng rng(spec_.seed);
  struct Block {
    const char* name;
    int in, out, stride;
  };
  const Block blocks[] = {{"conv1_1", 3, 8, 1}, {"conv2_1", 8, 16, 2}, {"conv3_1", 16, 16, 2}};
  for (const auto& b : blocks) {
    auto conv = std::make_unique<Conv2d>(ConvSpec{b.in, b.out, 3, b.stride, 1, PadMode::zero, true});
    init_normal(conv->weight(), rng, std::sqrt(2.0 / (b.in * 9)));
    for (double& v : conv->bias().value) v = spec_.tiny_zero_bias ? 0.0 : rng.uniform(-0.1, 0.1);
    net_.add(std::move(conv));
    net_.add(std::make_unique<ActivationLayer>(spec_.tiny_activation));
    names_.emplace_back(b.name, net_.size());
  }
}

void FeatureExtractor::build_vgg19() {
  const auto& ch = vgg19_conv_channels();
  const auto& names = vgg19_layer_names();
  for (std::size_t i = 0; i < ch.size(); ++i) {
    // pool between blocks: before conv2_1, conv3_1, conv4_1, conv5_1
    if (i > 0 && names[i].ends_with("_1")) net_.add(std::make_unique<MaxPool2>());
    net_.add(std::make_unique<Conv2d>(ConvSpec{ch[i].second, ch[i].first, 3, 1, 1, PadMode::zero, true}));
    net_.add(std::make_unique<ActivationLayer>(Activation::relu));
    names_.emplace_back(names[i], net_.size());
  }
  load_vgg19_weights();
}

void FeatureExtractor::load_vgg19_weights() {
  const auto& path = spec_.weights_path;
  if (path.empty() || !std::filesystem::exists(path))
    throw ConfigError("pretrained VGG19 weights not found" + (path.empty() ? std::string() : " at " + path.string()) +
                      ".\n" + kWeightsHelp);
  if (spec_.weights_sha256.empty())
    throw ConfigError("no sha256 recorded for " + path.string() + "; add it to the extractor config");
  const std::string actual = sha256_file(path);
  if (actual != spec_.weights_sha256)
    throw ConfigError("checksum mismatch for " + path.string() + ": expected " + spec_.weights_sha256 + ", got " +
                      actual);

  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kVggMagic, 8) != 0) throw ConfigError(path.string() + " is not a VGG19 weight file");
  auto read_u32 = [&] {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ConfigError("truncated weight file " + path.string());
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  };
  auto read_floats = [&](std::vector<double>& dst) {
    std::vector<std::uint32_t> raw(dst.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (!in) throw ConfigError("truncated weight file " + path.string());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      std::uint32_t u = raw[i];
      if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
      dst[i] = static_cast<double>(std::bit_cast<float>(u));
    }
  };

  const auto& ch = vgg19_conv_channels();
  if (read_u32() != ch.size()) throw ConfigError("unexpected layer count in " + path.string());
  const std::vector<Param*> params = net_.params();  // weight, bias per conv
  for (std::size_t i = 0; i < ch.size(); ++i) {
    const auto [out, inc] = ch[i];
    const std::uint32_t fo = read_u32(), fi = read_u32(), fk = read_u32();
    if (fo != static_cast<std::uint32_t>(out) || fi != static_cast<std::uint32_t>(inc) || fk != 3)
      throw ConfigError("layer " + vgg19_layer_names()[i] + " has unexpected shape in " + path.string());
    read_floats(params[2 * i]->value);
    read_floats(params[2 * i + 1]->value);
  }
  for (const Param* p : params)
    for (double v : p->value)
      if (!std::isfinite(v)) throw ConfigError("non-finite value in weight file " + path.string());
}

std::vector<std::string> FeatureExtractor::available_layers() const {
  std::vector<std::string> out;
  for (const auto& [n, i] : names_) out.push_back(n);
  return out;
}

std::vector<std::string> FeatureExtractor::default_layers() const {
  std::vector<std::string> out;
  for (const auto& [n, i] : names_) {
    const bool wanted = std::find(spec_.content_layers.begin(), spec_.content_layers.end(), n) !=
                            spec_.content_layers.end() ||
                        std::find(spec_.style_layers.begin(), spec_.style_layers.end(), n) != spec_.style_layers.end();
    if (wanted) out.push_back(n);
  }
  return out;
}

int FeatureExtractor::activation_of(const std::string& layer) const {
  for (const auto& [n, i] : names_)
    if (n == layer) return i;
  throw ArgumentError("unknown layer '" + layer + "'; available: " + join(available_layers()));
}

std::vector<std::pair<std::string, int>> FeatureExtractor::resolve(const std::vector<std::string>& layers) const {
  std::vector<std::pair<std::string, int>> out;
  for (const auto& l : layers) out.emplace_back(l, activation_of(l));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

FeatureBundle FeatureExtractor::extract(const ImageTensor& image) const { return extract(image, default_layers()); }

FeatureBundle FeatureExtractor::extract(const ImageTensor& image, const std::vector<std::string>& layers) const {
  if (image.channels() != 3) throw ArgumentError("feature extraction needs a 3-channel image");
  return trace(image.to_unit().tensor(), layers).features;
}

FeatureExtractor::Trace FeatureExtractor::trace(const Tensor& pixels, const std::vector<std::string>& layers) const {
  if (pixels.channels() != 3) throw ArgumentError("feature extraction needs 3 channels");
  const auto wanted = resolve(layers);
  Trace t;
  if (wanted.empty()) return t;
  // run only as deep as the deepest requested layer
  const int depth = wanted.back().second;
  t.activations.reserve(depth + 1);
  t.activations.push_back(pixels);
  for (int i = 0; i < depth; ++i) t.activations.push_back(net_.layer(i)->forward(t.activations.back()));
  for (const auto& [name, idx] : wanted) {
    if (!t.activations[idx].all_finite()) throw NumericError("non-finite features at " + name);
    t.features.add(name, t.activations[idx]);
  }
  return t;
}

Tensor FeatureExtractor::backward(const Trace& trace, const std::map<std::string, Tensor>& feature_grads) const {
  const int depth = static_cast<int>(trace.activations.size()) - 1;
  if (depth < 0) throw ArgumentError("empty trace");
  std::vector<Tensor> g(depth + 1);
  for (const auto& [name, grad] : feature_grads) {
    const int idx = activation_of(name);
    if (idx > depth) throw ArgumentError("layer '" + name + "' was not traced");
    if (!(grad.shape() == trace.activations[idx].shape())) throw ArgumentError("gradient shape mismatch at " + name);
    if (g[idx].empty())
      g[idx] = grad;
    else
      g[idx] += grad;
  }
  for (int i = depth - 1; i >= 0; --i) {
    if (g[i + 1].empty()) continue;
    Tensor dx = net_.layer(i)->backward(trace.activations[i], trace.activations[i + 1], g[i + 1], nullptr);
    if (g[i].empty())
      g[i] = std::move(dx);
    else
      g[i] += dx;
  }
  return g[0].empty() ? Tensor(trace.activations[0].shape()) : std::move(g[0]);
}

Shape FeatureExtractor::feature_shape(const std::string& layer, const Shape& input) const {
  const int idx = activation_of(layer);
  Shape s = input;
  for (int i = 0; i < idx; ++i) s = net_.layer(i)->output_shape(s);
  return s;
}

void write_vgg19_weights(const std::filesystem::path& path, const std::vector<std::vector<float>>& weights,
                         const std::vector<std::vector<float>>& biases) {
  const auto& ch = vgg19_conv_channels();
  if (weights.size() != ch.size() || biases.size() != ch.size()) throw ArgumentError("expected 16 conv layers");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  auto put_u32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto put_floats = [&](const std::vector<float>& v) {
    for (float f : v) put_u32(std::bit_cast<std::uint32_t>(f));
  };
  out.write(kVggMagic, 8);
  put_u32(static_cast<std::uint32_t>(ch.size()));
  for (std::size_t i = 0; i < ch.size(); ++i) {
    const auto [o, in] = ch[i];
    if (weights[i].size() != static_cast<std::size_t>(o) * in * 9 || biases[i].size() != static_cast<std::size_t>(o))
      throw ArgumentError("layer " + vgg19_layer_names()[i] + " has the wrong parameter count");
    put_u32(o);
    put_u32(in);
    put_u32(3);
    put_floats(weights[i]);
    put_floats(biases[i]);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fbst
