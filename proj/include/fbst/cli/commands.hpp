#pragma once

#include "fbst/cli/config.hpp"
#include "fbst/cyclegan/toy.hpp"
#include "fbst/eval/metrics.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace fbst {

enum ExitCode { kExitOk = 0, kExitConfig = 2, kExitRuntime = 3 };

// Full pipeline over the configured scenes. Layout under config.output:
//   scenes/<scene_id>/{original,stylized,reconstruction,score_map,mask}.png
//   scenes/<scene_id>/artifacts.json, report.json, <experiment_id>_fig<k>.png
struct RunOutcome {
  ExperimentReport report;
  std::vector<SceneFailure> failures;
  std::vector<std::filesystem::path> figures;
};

RunOutcome run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

// Figures rendered from a run directory's scene artifacts into `output_dir`:
// fig1 input/stylized/reconstruction/score map per scene, fig2 mask/score
// map/overlay per scene.
std::vector<std::filesystem::path> render_run_figures(const std::filesystem::path& run_dir,
                                                      const std::string& experiment_id,
                                                      const std::filesystem::path& output_dir);

// Score maps as <scores>/<id>.png or <scores>/<id>/score_map.png, masks as
// <masks>/<id>.png.
ExperimentReport evaluate_directories(const std::filesystem::path& score_dir, const std::filesystem::path& mask_dir,
                                      const std::string& experiment_id);

// Writes the checkpoint series, training_log.csv and toy_summary.json.
ToyTrainingOutcome train_toy(const ToyTaskSpec& task, const TrainingGroupConfig& config,
                             const std::filesystem::path& output, int checkpoint_every, std::ostream* log = nullptr);

// Parses argv-style arguments (without the program name) and runs one
// subcommand. Returns 0, 2 for configuration/argument errors, 3 for runtime
// failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fbst
