#pragma once

#include "fbst/core/image.hpp"
#include "fbst/nn/layers.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace fbst {

struct CycleGanArch {
  int base_channels = 32;
  int residual_blocks = 2;  // 2..6
  int image_height = 64;    // multiple of 4, at least 32
  int image_width = 64;

  void validate() const;
  friend bool operator==(const CycleGanArch&, const CycleGanArch&) = default;
};

void to_json(nlohmann::json& j, const CycleGanArch& a);
void from_json(const nlohmann::json& j, CycleGanArch& a);

// c7s1-b, two stride-2 downsamplings, residual blocks, two nearest-upsample
// + conv stages, c7s1-3 with tanh. Works in signed range.
Sequential build_generator(const CycleGanArch& arch);
// 70x70-style PatchGAN with three stride-2 layers; least-squares outputs.
Sequential build_discriminator(const CycleGanArch& arch);

enum class GroupId { A, B, C, D, E, F };

GroupId parse_group_id(const std::string& s);
const char* to_string(GroupId g);

enum class Direction { a_to_b, b_to_a };

Direction parse_direction(const std::string& s);
const char* to_string(Direction d);

struct TrainingMeta {
  GroupId group_id = GroupId::F;
  int epochs_completed = 0;
  std::uint64_t seed = 0;
};

// Domain A is the source (stylized) domain, B the target (photo) domain.
class TranslationModel {
 public:
  TranslationModel(CycleGanArch arch, std::uint64_t seed, GroupId group = GroupId::F);

  TranslationModel(TranslationModel&&) = default;
  TranslationModel& operator=(TranslationModel&&) = default;

  const CycleGanArch& arch() const { return arch_; }
  TrainingMeta& meta() { return meta_; }
  const TrainingMeta& meta() const { return meta_; }

  Sequential& gen_ab() { return gen_ab_; }
  Sequential& gen_ba() { return gen_ba_; }
  Sequential& disc_a() { return disc_a_; }
  Sequential& disc_b() { return disc_b_; }
  const Sequential& gen_ab() const { return gen_ab_; }
  const Sequential& gen_ba() const { return gen_ba_; }
  const Sequential& disc_a() const { return disc_a_; }
  const Sequential& disc_b() const { return disc_b_; }
  const Sequential& generator(Direction d) const { return d == Direction::a_to_b ? gen_ab_ : gen_ba_; }

  // gen_ab, gen_ba, disc_a, disc_b parameters in that order
  std::vector<const Param*> all_params() const;
  std::vector<Param*> all_params();
  bool all_finite() const;

 private:
  CycleGanArch arch_;
  TrainingMeta meta_;
  Sequential gen_ab_, gen_ba_, disc_a_, disc_b_;
};

// Single generator pass. The image must have 3 channels and the arch size;
// output carries the input's range tag.
ImageTensor translate(const TranslationModel& model, const ImageTensor& image, Direction direction);

// <path> holds the raw parameters, <path>.json the arch, meta and checksum.
void save_checkpoint(const TranslationModel& model, const std::filesystem::path& path);
TranslationModel load_checkpoint(const std::filesystem::path& path);
std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

}  // namespace fbst
