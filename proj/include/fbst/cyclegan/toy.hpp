#pragma once

#include "fbst/core/image.hpp"
#include "fbst/cyclegan/training.hpp"
#include "fbst/nst/optimize.hpp"

#include <vector>

namespace fbst {

// Source domain built by running NST over target images (the stylized-photo
// groups); record ids and splits are kept.
std::vector<SceneRecord> make_stylized_domain(const std::vector<SceneRecord>& target, const ImageTensor& style,
                                              const NSTParams& params, int jobs = 1);

struct ToyTaskSpec {
  int images = 200;
  int size = 64;
  double eval_fraction = 0.2;
  std::uint64_t seed = 0;
  int jobs = 1;
  NSTParams stylize = default_stylize();

  static NSTParams default_stylize();
};

// Synthetic scenes as domain B, their NST-stylized copies as domain A.
struct ToyTask {
  ImageTensor style;
  std::vector<SceneRecord> train_a, train_b, eval_a, eval_b;
};

ToyTask make_toy_task(const ToyTaskSpec& spec);

std::vector<ImageTensor> images_of(const std::vector<SceneRecord>& records);

// Group F shape on the toy domains, sized to train on a desktop CPU.
TrainingGroupConfig toy_training_config(std::uint64_t seed = 0);

struct ToyTrainingOutcome {
  TrainingResult result;
  double baseline_cycle_loss;  // eval split, untrained weights
  double final_cycle_loss;     // eval split, after training
};

// Builds the task, measures the untrained baseline, trains, re-measures.
ToyTrainingOutcome run_toy_training(const ToyTaskSpec& task_spec, const TrainingGroupConfig& config,
                                    const TrainingOptions& options = {});

}  // namespace fbst
