#include "fbst/cli/commands.hpp"

#include "fbst/core/png_io.hpp"
#include "fbst/core/synthetic.hpp"
#include "fbst/errors.hpp"
#include "fbst/eval/figures.hpp"
#include "fbst/util/random.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

namespace fbst {

namespace {

namespace fs = std::filesystem;

constexpr int kMaxFigureRows = 8;

std::vector<SceneRecord> load_scenes(const ExperimentConfig& c, std::vector<std::string>& warnings) {
  if (c.experiment == ExperimentKind::toy)
    return synthesize_dataset(c.toy.count, derive_seed(c.seed, 10), c.toy.size, c.toy.size, 0.0);
  Dataset d = load_dataset(c.dataset->root, c.dataset->layout, c.jobs);
  warnings = d.summary.warnings;
  for (const auto& e : d.summary.errors) warnings.push_back(e.scene_id + ": " + e.message);
  if (c.dataset->limit > 0 && static_cast<int>(d.records.size()) > c.dataset->limit)
    d.records.erase(d.records.begin() + c.dataset->limit, d.records.end());
  if (d.records.empty()) throw ConfigError("dataset " + c.dataset->root.string() + " has no usable scenes");
  return std::move(d.records);
}

BackendConfig build_backend(const BackendSpec& spec, const ExperimentConfig& c, bool forward) {
  switch (spec.kind) {
    case BackendKind::identity: return IdentityBackend{};
    case BackendKind::nst: {
      NstBackend b;
      b.params = spec.nst;
      if (!spec.style.empty()) {
        b.style = load_image(spec.style);
        b.style_label = spec.style.filename().string();
      } else if (forward) {
        b.style = synthesize_style_image(derive_seed(c.seed, 11), c.toy.size, c.toy.size);
        b.style_label = "synthetic_style";
      } else {
        // anomaly-free scene as the guide back to the scene domain
        b.style = render_base_pattern({BasePattern::gradient, AnomalyShape::none, 0.05, derive_seed(c.seed, 12),
                                       c.toy.size, c.toy.size, ""});
        b.style_label = "synthetic_clean_scene";
      }
      b.extractor = std::make_shared<const FeatureExtractor>(b.params.extractor);
      return b;
    }
    case BackendKind::cyclegan: {
      CycleGanBackend b;
      b.model = std::make_shared<const TranslationModel>(load_checkpoint(spec.checkpoint));
      b.direction = spec.direction.value_or(forward ? Direction::b_to_a : Direction::a_to_b);
      b.model_label = spec.checkpoint.filename().string();
      return b;
    }
  }
  throw ArgumentError("unknown backend kind");
}

struct SceneArtifacts {
  std::string scene_id;
  fs::path dir;
  ImageTensor original, stylized, reconstruction;
  AnomalyScoreMap score_map;
  std::optional<AnomalyMask> mask;
};

std::vector<SceneArtifacts> read_scene_artifacts(const fs::path& run_dir) {
  const fs::path scenes = run_dir / "scenes";
  if (!fs::is_directory(scenes)) throw ConfigError("no scenes directory in " + run_dir.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(scenes))
    if (e.is_directory() && fs::exists(e.path() / "artifacts.json")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw ConfigError("no scene artifacts in " + scenes.string());
  std::vector<SceneArtifacts> out;
  for (const auto& d : dirs) {
    std::ifstream in(d / "artifacts.json");
    const auto j = nlohmann::json::parse(in);
    std::optional<AnomalyMask> mask;
    if (fs::exists(d / "mask.png")) mask = load_mask(d / "mask.png");
    out.push_back({j.at("scene_id").get<std::string>(), d, load_image(d / "original.png"),
                   load_image(d / "stylized.png"), load_image(d / "reconstruction.png"),
                   load_score_map(d / "score_map.png"), mask});
  }
  return out;
}

ImageTensor mask_image(const AnomalyMask& m) {
  Tensor t(1, m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) t.at(0, y, x) = m.at(y, x) ? 1.0 : 0.0;
  return ImageTensor(std::move(t));
}

void write_png_file(const fs::path& path, const Raster8& r, std::vector<fs::path>& written) {
  write_png(path, r);
  written.push_back(path);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  std::vector<std::string> load_warnings;
  const std::vector<SceneRecord> scenes = load_scenes(config, load_warnings);
  const BackendChoice backend = BackendChoice::of(build_backend(config.forward, config, true),
                                                  build_backend(config.backward, config, false));
  if (log) *log << "running " << scenes.size() << " scenes (" << to_string(backend.forward) << " -> "
                << to_string(backend.backward) << ")\n";

  const BatchResult batch = run_batch(scenes, backend, config.pipeline, config.jobs);
  const fs::path out_dir = config.output;
  fs::remove_all(out_dir / "scenes");
  std::vector<ScoredScene> scored;
  std::size_t next = 0;
  for (const auto& a : batch.artifacts) {
    while (scenes[next].scene_id != a.scene_id) ++next;
    const SceneRecord& scene = scenes[next];
    const fs::path rel = fs::path("scenes") / a.scene_id;
    write_artifacts(out_dir / rel, a, backend, config.pipeline);
    if (scene.mask) save_mask(out_dir / rel / "mask.png", *scene.mask);
    scored.push_back({a.scene_id, a.score_map, scene.mask, rel.generic_string()});
  }

  RunOutcome outcome{build_report(config.experiment_id, scored, describe(backend), config.snapshot()),
                     batch.failures,
                     {}};
  for (const auto& f : batch.failures) {
    outcome.report.exclusions.push_back({f.scene_id, "failed in " + f.stage + ": " + f.message});
    if (log) *log << "scene " << f.scene_id << " failed in " << f.stage << ": " << f.message << '\n';
  }
  for (auto& w : load_warnings) outcome.report.warnings.push_back(std::move(w));
  write_report(out_dir / "report.json", outcome.report);
  if (!batch.artifacts.empty()) outcome.figures = render_run_figures(out_dir, config.experiment_id, out_dir);
  if (log) *log << "wrote " << (out_dir / "report.json").string() << '\n';
  return outcome;
}

std::vector<fs::path> render_run_figures(const fs::path& run_dir, const std::string& experiment_id,
                                         const fs::path& output_dir) {
  std::vector<SceneArtifacts> scenes = read_scene_artifacts(run_dir);
  if (scenes.size() > kMaxFigureRows) scenes.erase(scenes.begin() + kMaxFigureRows, scenes.end());
  const int width = scenes.front().original.width();
  const GridLayout layout{4, 0, std::clamp(128 / std::max(width, 1), 1, 4)};

  std::vector<GridRow> fig1, fig2;
  for (const auto& s : scenes) {
    const bool highlight = s.mask && s.mask->count() > 0;
    fig1.push_back({s.scene_id,
                    {{s.original, highlight}, {s.stylized}, {s.reconstruction}, {score_map_image(s.score_map)}},
                    s.mask});
    GridRow row{s.scene_id, {}, s.mask};
    row.cells.push_back({s.mask ? mask_image(*s.mask) : ImageTensor::filled(1, s.score_map.height(), s.score_map.width(), 0.0)});
    row.cells.push_back({score_map_image(s.score_map, true)});
    row.cells.push_back({score_map_image(s.score_map, true), highlight});
    fig2.push_back(std::move(row));
  }
  fs::create_directories(output_dir);
  std::vector<fs::path> written;
  write_png_file(output_dir / (experiment_id + "_fig1.png"),
                 render_grid(fig1, {"input", "stylized", "reconstruction", "score map"}, layout), written);
  write_png_file(output_dir / (experiment_id + "_fig2.png"),
                 render_grid(fig2, {"mask", "score map (norm)", "overlay"}, layout), written);
  return written;
}

ExperimentReport evaluate_directories(const fs::path& score_dir, const fs::path& mask_dir,
                                      const std::string& experiment_id) {
  if (!fs::is_directory(score_dir)) throw ConfigError("score directory does not exist: " + score_dir.string());
  if (!fs::is_directory(mask_dir)) throw ConfigError("mask directory does not exist: " + mask_dir.string());
  std::vector<std::pair<std::string, fs::path>> maps;
  for (const auto& e : fs::directory_iterator(score_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png")
      maps.emplace_back(e.path().stem().string(), e.path());
    else if (e.is_directory() && fs::exists(e.path() / "score_map.png"))
      maps.emplace_back(e.path().filename().string(), e.path() / "score_map.png");
  }
  std::sort(maps.begin(), maps.end());
  if (maps.empty()) throw ConfigError("no score maps found in " + score_dir.string());

  std::vector<ScoredScene> scenes;
  std::vector<Exclusion> unreadable;
  for (const auto& [id, path] : maps) {
    try {
      std::optional<AnomalyMask> mask;
      const fs::path mp = mask_dir / (id + ".png");
      if (fs::exists(mp)) mask = load_mask(mp);
      scenes.push_back({id, load_score_map(path), mask, ""});
    } catch (const IoError& e) {
      unreadable.push_back({id, std::string("unreadable input: ") + e.what()});
    }
  }
  const nlohmann::json config = {{"scores", score_dir.generic_string()}, {"masks", mask_dir.generic_string()}};
  ExperimentReport report = build_report(experiment_id, scenes, {{"kind", "precomputed"}}, config);
  for (auto& u : unreadable) report.exclusions.push_back(std::move(u));
  return report;
}

ToyTrainingOutcome train_toy(const ToyTaskSpec& task, const TrainingGroupConfig& config, const fs::path& output,
                             int checkpoint_every, std::ostream* log) {
  config.validate();
  TrainingOptions options;
  options.checkpoint_dir = output;
  options.checkpoint_every = checkpoint_every;
  options.log_path = output / "training_log.csv";
  if (log)
    options.on_epoch = [log](const EpochLog& e, const TranslationModel&) {
      *log << "epoch " << e.epoch << ": gen " << e.gen_loss << " disc " << e.disc_loss << " cycle " << e.cycle_loss
           << " identity " << e.identity_loss << std::endl;
    };
  fs::create_directories(output);
  ToyTrainingOutcome outcome = run_toy_training(task, config, options);
  nlohmann::json j = {{"baseline_cycle_loss", outcome.baseline_cycle_loss},
                      {"final_cycle_loss", outcome.final_cycle_loss},
                      {"ratio", outcome.final_cycle_loss / outcome.baseline_cycle_loss},
                      {"epochs", config.epochs},
                      {"images", task.images},
                      {"seed", config.seed},
                      {"training", config}};
  if (outcome.result.last_checkpoint) j["checkpoint"] = outcome.result.last_checkpoint->filename().string();
  write_json(output / "toy_summary.json", j);
  if (log)
    *log << "eval cycle loss " << outcome.baseline_cycle_loss << " -> " << outcome.final_cycle_loss << " (ratio "
         << outcome.final_cycle_loss / outcome.baseline_cycle_loss << ")\n";
  return outcome;
}

}  // namespace fbst
