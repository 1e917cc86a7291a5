#include "fbst/cyclegan/toy.hpp"

#include "fbst/core/synthetic.hpp"
#include "fbst/errors.hpp"
#include "fbst/util/parallel.hpp"
#include "fbst/util/random.hpp"

#include <optional>

namespace fbst {

std::vector<SceneRecord> make_stylized_domain(const std::vector<SceneRecord>& target, const ImageTensor& style,
                                              const NSTParams& params, int jobs) {
  params.validate();
  const FeatureExtractor extractor(params.extractor);
  std::vector<std::optional<SceneRecord>> out(target.size());
  parallel_for(target.size(), jobs, [&](std::size_t i) {
    const auto& r = target[i];
    NSTParams p = params;
    p.seed = derive_seed(params.seed, i);
    try {
      out[i].emplace(r.scene_id, nst_optimize(extractor, r.image, style, p).output, r.mask, r.split);
    } catch (const std::exception& e) {
      throw StageError("stylize " + r.scene_id, e.what());
    }
  });
  std::vector<SceneRecord> records;
  records.reserve(out.size());
  for (auto& r : out) records.push_back(std::move(*r));
  return records;
}

NSTParams ToyTaskSpec::default_stylize() {
  NSTParams p;
  p.content_weight = 1e5;
  p.style_weight = 1e6;
  p.iterations = 50;
  return p;
}

ToyTask make_toy_task(const ToyTaskSpec& spec) {
  if (spec.images < 2) throw ArgumentError("toy task needs at least two images");
  const auto scenes = synthesize_dataset(spec.images, derive_seed(spec.seed, 1), spec.size, spec.size, spec.eval_fraction);
  ToyTask task{synthesize_style_image(derive_seed(spec.seed, 2), spec.size, spec.size), {}, {}, {}, {}};
  NSTParams stylize = spec.stylize;
  stylize.seed = derive_seed(spec.seed, 3);
  const auto stylized = make_stylized_domain(scenes, task.style, stylize, spec.jobs);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const bool train = scenes[i].split == SplitTag::train;
    (train ? task.train_b : task.eval_b).push_back(scenes[i]);
    (train ? task.train_a : task.eval_a).push_back(stylized[i]);
  }
  return task;
}

std::vector<ImageTensor> images_of(const std::vector<SceneRecord>& records) {
  std::vector<ImageTensor> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.image);
  return out;
}

TrainingGroupConfig toy_training_config(std::uint64_t seed) {
  TrainingGroupConfig c = TrainingGroupConfig::for_group(GroupId::F);
  c.source_domain = {"NST-stylized synthetic scenes", {}, true};
  c.target_domain = {"synthetic scenes", {}, false};
  c.arch.base_channels = 16;
  c.epochs = 20;
  c.decay_epochs = 10;
  c.lambda_cycle = 30.0;
  c.lambda_identity = 15.0;
  c.seed = seed;
  return c;
}

ToyTrainingOutcome run_toy_training(const ToyTaskSpec& task_spec, const TrainingGroupConfig& config,
                                    const TrainingOptions& options) {
  config.validate();
  const ToyTask task = make_toy_task(task_spec);
  const auto eval_a = images_of(task.eval_a), eval_b = images_of(task.eval_b);
  const double baseline = mean_cycle_loss(TranslationModel(config.arch, config.seed, config.group_id), eval_a, eval_b,
                                          task_spec.jobs);
  TrainingResult result = train(config, task.train_a, task.train_b, options);
  const double final_loss = mean_cycle_loss(result.model, eval_a, eval_b, task_spec.jobs);
  return {std::move(result), baseline, final_loss};
}

}  // namespace fbst
