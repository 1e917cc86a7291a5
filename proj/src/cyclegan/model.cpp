#include "fbst/cyclegan/model.hpp"

#include "fbst/errors.hpp"
#include "fbst/util/hash.hpp"
#include "fbst/util/random.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fbst {

namespace {

constexpr char kMagic[8] = {'F', 'B', 'C', 'G', 'A', 'N', '\x01', '\0'};
constexpr double kInitStd = 0.02;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void add_conv(Sequential& net, int in, int out, int k, int stride, int pad, PadMode mode, bool bias) {
  net.add(std::make_unique<Conv2d>(ConvSpec{in, out, k, stride, pad, mode, bias}));
}

void add_norm_act(Sequential& net, Activation act) {
  net.add(std::make_unique<InstanceNorm>());
  net.add(std::make_unique<ActivationLayer>(act));
}

void init_network(Sequential& net, std::uint64_t seed) {
  Rng rng(seed);
  for (Param* p : net.params())
    if (p->name == "weight") init_normal(*p, rng, kInitStd);
}

}  // namespace

void CycleGanArch::validate() const {
  if (base_channels < 1) throw ArgumentError("base_channels must be positive");
  if (residual_blocks < 2 || residual_blocks > 6) throw ArgumentError("residual_blocks must be in [2, 6]");
  if (image_height < 32 || image_width < 32 || image_height % 4 || image_width % 4)
    throw ArgumentError("image size must be a multiple of 4 and at least 32");
}

void to_json(nlohmann::json& j, const CycleGanArch& a) {
  j = {{"base_channels", a.base_channels},
       {"residual_blocks", a.residual_blocks},
       {"image_height", a.image_height},
       {"image_width", a.image_width}};
}

void from_json(const nlohmann::json& j, CycleGanArch& a) {
  a.base_channels = j.value("base_channels", a.base_channels);
  a.residual_blocks = j.value("residual_blocks", a.residual_blocks);
  a.image_height = j.value("image_height", a.image_height);
  a.image_width = j.value("image_width", a.image_width);
}

Sequential build_generator(const CycleGanArch& arch) {
  arch.validate();
  const int b = arch.base_channels;
  Sequential g;
  add_conv(g, 3, b, 7, 1, 3, PadMode::reflect, false);
  add_norm_act(g, Activation::relu);
  add_conv(g, b, 2 * b, 3, 2, 1, PadMode::zero, false);
  add_norm_act(g, Activation::relu);
  add_conv(g, 2 * b, 4 * b, 3, 2, 1, PadMode::zero, false);
  add_norm_act(g, Activation::relu);
  for (int r = 0; r < arch.residual_blocks; ++r) {
    const int skip = g.size();
    add_conv(g, 4 * b, 4 * b, 3, 1, 1, PadMode::reflect, false);
    add_norm_act(g, Activation::relu);
    add_conv(g, 4 * b, 4 * b, 3, 1, 1, PadMode::reflect, false);
    g.add(std::make_unique<InstanceNorm>());
    g.add_residual(skip);
  }
  for (int mult : {2, 1}) {
    g.add(std::make_unique<Upsample2>());
    add_conv(g, 2 * mult * b, mult * b, 3, 1, 1, PadMode::reflect, false);
    add_norm_act(g, Activation::relu);
  }
  add_conv(g, b, 3, 7, 1, 3, PadMode::reflect, true);
  g.add(std::make_unique<ActivationLayer>(Activation::tanh));
  return g;
}

Sequential build_discriminator(const CycleGanArch& arch) {
  arch.validate();
  const int b = arch.base_channels;
  Sequential d;
  add_conv(d, 3, b, 4, 2, 1, PadMode::zero, true);
  d.add(std::make_unique<ActivationLayer>(Activation::leaky_relu, 0.2));
  add_conv(d, b, 2 * b, 4, 2, 1, PadMode::zero, false);
  add_norm_act(d, Activation::leaky_relu);
  add_conv(d, 2 * b, 4 * b, 4, 2, 1, PadMode::zero, false);
  add_norm_act(d, Activation::leaky_relu);
  add_conv(d, 4 * b, 8 * b, 4, 1, 1, PadMode::zero, false);
  add_norm_act(d, Activation::leaky_relu);
  add_conv(d, 8 * b, 1, 4, 1, 1, PadMode::zero, true);
  return d;
}

GroupId parse_group_id(const std::string& s) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'F') return static_cast<GroupId>(s[0] - 'A');
  throw ArgumentError("unknown training group '" + s + "' (expected A-F)");
}

const char* to_string(GroupId g) {
  static const char* names[] = {"A", "B", "C", "D", "E", "F"};
  return names[static_cast<int>(g)];
}

Direction parse_direction(const std::string& s) {
  if (s == "a_to_b") return Direction::a_to_b;
  if (s == "b_to_a") return Direction::b_to_a;
  throw ArgumentError("unknown direction '" + s + "' (expected a_to_b or b_to_a)");
}

const char* to_string(Direction d) { return d == Direction::a_to_b ? "a_to_b" : "b_to_a"; }

TranslationModel::TranslationModel(CycleGanArch arch, std::uint64_t seed, GroupId group)
    : arch_(arch),
      meta_{group, 0, seed},
      gen_ab_(build_generator(arch)),
      gen_ba_(build_generator(arch)),
      disc_a_(build_discriminator(arch)),
      disc_b_(build_discriminator(arch)) {
  init_network(gen_ab_, derive_seed(seed, 1));
  init_network(gen_ba_, derive_seed(seed, 2));
  init_network(disc_a_, derive_seed(seed, 3));
  init_network(disc_b_, derive_seed(seed, 4));
}

std::vector<const Param*> TranslationModel::all_params() const {
  std::vector<const Param*> out;
  for (const Sequential* net : {&gen_ab_, &gen_ba_, &disc_a_, &disc_b_})
    for (const Param* p : net->params()) out.push_back(p);
  return out;
}

std::vector<Param*> TranslationModel::all_params() {
  std::vector<Param*> out;
  for (Sequential* net : {&gen_ab_, &gen_ba_, &disc_a_, &disc_b_})
    for (Param* p : net->params()) out.push_back(p);
  return out;
}

bool TranslationModel::all_finite() const {
  for (const Param* p : all_params())
    for (double v : p->value)
      if (!std::isfinite(v)) return false;
  return true;
}

ImageTensor translate(const TranslationModel& model, const ImageTensor& image, Direction direction) {
  const auto& arch = model.arch();
  if (image.channels() != 3 || image.height() != arch.image_height || image.width() != arch.image_width)
    throw ArgumentError("translate expects a 3x" + std::to_string(arch.image_height) + "x" +
                        std::to_string(arch.image_width) + " image");
  const Tensor y = model.generator(direction).forward(image.to_signed().tensor());
  if (!y.all_finite()) throw NumericError("non-finite generator output");
  return ImageTensor::clamped(y, RangeTag::signed_unit).with_range(image.range());
}

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

void save_checkpoint(const TranslationModel& model, const std::filesystem::path& path) {
  std::string blob(kMagic, sizeof kMagic);
  const auto params = model.all_params();
  auto put_u64 = [&](std::uint64_t v) { blob.append(reinterpret_cast<const char*>(&v), sizeof v); };
  put_u64(params.size());
  std::size_t total = 0;
  for (const Param* p : params) {
    put_u64(p->value.size());
    blob.append(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(double));
    total += p->value.size();
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("cannot write checkpoint " + path.string());
  }
  const nlohmann::json side = {{"format", "fbst-cyclegan-1"},
                               {"arch", model.arch()},
                               {"group_id", to_string(model.meta().group_id)},
                               {"epoch", model.meta().epochs_completed},
                               {"seed", model.meta().seed},
                               {"parameter_count", total},
                               {"sha256", sha256_hex(std::string_view(blob))}};
  std::ofstream js(checkpoint_sidecar(path), std::ios::trunc);
  js << side.dump(2) << '\n';
  if (!js) throw IoError("cannot write checkpoint sidecar for " + path.string());
}

TranslationModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream js(checkpoint_sidecar(path));
  if (!js) throw IoError("missing checkpoint sidecar " + checkpoint_sidecar(path).string());
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint sidecar: " + std::string(e.what()));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string blob = ss.str();
  if (sha256_hex(std::string_view(blob)) != side.value("sha256", ""))
    throw IoError("checkpoint checksum mismatch for " + path.string());

  TranslationModel model(side.at("arch").get<CycleGanArch>(), side.value<std::uint64_t>("seed", 0),
                         parse_group_id(side.value("group_id", "F")));
  model.meta().epochs_completed = side.value("epoch", 0);

  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (pos + n > blob.size()) throw IoError("truncated checkpoint " + path.string());
    std::memcpy(dst, blob.data() + pos, n);
    pos += n;
  };
  char magic[sizeof kMagic];
  take(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError("not a CycleGAN checkpoint: " + path.string());
  std::uint64_t count = 0;
  take(&count, sizeof count);
  auto params = model.all_params();
  if (count != params.size()) throw IoError("checkpoint does not match its architecture");
  for (Param* p : params) {
    std::uint64_t n = 0;
    take(&n, sizeof n);
    if (n != p->value.size()) throw IoError("checkpoint does not match its architecture");
    take(p->value.data(), n * sizeof(double));
  }
  if (pos != blob.size()) throw IoError("trailing bytes in checkpoint " + path.string());
  if (!model.all_finite()) throw NumericError("checkpoint contains non-finite parameters");
  return model;
}

}  // namespace fbst
