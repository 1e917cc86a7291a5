#pragma once

#include "fbst/core/image.hpp"
#include "fbst/cyclegan/model.hpp"
#include "fbst/util/random.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fbst {

// Mean absolute difference in x's range; x_reconstructed is converted first.
double cycle_consistency_loss(const ImageTensor& x, const ImageTensor& x_reconstructed);

struct AdversarialLosses {
  double gen_loss;   // mean((fake - 1)^2)
  double disc_loss;  // 0.5 mean((real - 1)^2) + 0.5 mean(fake^2)
};

AdversarialLosses adversarial_losses(const Tensor& disc_real, const Tensor& disc_fake);

struct GeneratorLossTerms {
  double adversarial = 0.0;
  double cycle = 0.0;
  double identity = 0.0;
};

double generator_objective(const GeneratorLossTerms& t, double lambda_cycle, double lambda_identity);

// One generator sample on signed-range images a (domain A) and b (domain B):
// both adversarial terms, both cycles and (when lambda_identity > 0) both
// identity terms. Generator parameter gradients go into `grads` if given;
// the generated images are returned through fake_a / fake_b.
GeneratorLossTerms generator_sample(const TranslationModel& model, const Tensor& a, const Tensor& b,
                                    double lambda_cycle, double lambda_identity, GradBuffer* grads,
                                    Tensor* fake_a = nullptr, Tensor* fake_b = nullptr);

// Least-squares loss of one discriminator on a real and a generated image.
double discriminator_sample(const Sequential& disc, const Tensor& real, const Tensor& fake, GradBuffer* grads);

// History of generated images; half of the queries swap in an older sample.
class ImagePool {
 public:
  ImagePool(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {}
  Tensor query(const Tensor& image);
  std::size_t size() const { return images_.size(); }

 private:
  std::size_t capacity_;
  Rng rng_;
  std::vector<Tensor> images_;
};

struct DomainSource {
  std::string label;
  std::vector<std::filesystem::path> roots;  // empty: not provided yet
  bool nst_stylized = false;                 // generated from the target domain by NST
};

struct TrainingGroupConfig {
  GroupId group_id = GroupId::F;
  DomainSource source_domain;
  DomainSource target_domain;
  int epochs = 10;
  int batch_size = 1;
  double learning_rate = 2e-4;
  int decay_epochs = 0;  // final epochs over which the rate falls linearly towards 0
  bool flip = true;      // random horizontal flips of training samples
  double lambda_cycle = 10.0;
  double lambda_identity = 5.0;
  std::uint64_t seed = 0;
  CycleGanArch arch;
  int pool_size = 50;

  // Domains pre-filled from the data-group table.
  static TrainingGroupConfig for_group(GroupId g);
  void validate() const;
};

// Constant for the first epochs - decay_epochs epochs, then linear towards 0.
double learning_rate_at(const TrainingGroupConfig& group, int epoch);

void to_json(nlohmann::json& j, const TrainingGroupConfig& c);
void from_json(const nlohmann::json& j, TrainingGroupConfig& c);

struct EpochLog {
  int epoch;
  double gen_loss;
  double disc_loss;
  double cycle_loss;
  double identity_loss;
};

struct TrainingOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  int checkpoint_every = 1;  // epochs
  std::optional<std::filesystem::path> log_path;
  std::function<void(const EpochLog&, const TranslationModel&)> on_epoch;
};

struct TrainingResult {
  TranslationModel model;
  std::vector<EpochLog> log;
  std::optional<std::filesystem::path> last_checkpoint;
};

// Images are resized to the arch size. Sample order per epoch is a seeded
// permutation, so runs are reproducible. A non-finite loss aborts with
// NumericError; checkpoints already written stay in place.
TrainingResult train(const TrainingGroupConfig& group, const std::vector<SceneRecord>& source_data,
                     const std::vector<SceneRecord>& target_data, const TrainingOptions& options = {});

// Mean of both round-trip cycle losses in unit range.
double mean_cycle_loss(const TranslationModel& model, const std::vector<ImageTensor>& domain_a,
                       const std::vector<ImageTensor>& domain_b, int jobs = 1);

// epoch,gen_loss,disc_loss,cycle_loss,identity_loss
void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace fbst
