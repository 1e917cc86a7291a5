#include "fbst/cli/commands.hpp"

#include "fbst/core/png_io.hpp"
#include "fbst/core/synthetic.hpp"
#include "fbst/errors.hpp"
#include "fbst/nst/params_json.hpp"
#include "fbst/util/random.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace fbst {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string output;
};

void add_common(CLI::App* cmd, Common& c, bool output_required) {
  cmd->add_option("--seed", c.seed, "Global seed");
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  auto* o = cmd->add_option("--output", c.output, "Output directory");
  if (output_required) o->required();
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(p.string() + " is not valid JSON: " + e.what());
  }
}

template <typename T>
T json_as(const nlohmann::json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed " + what + ": " + e.what());
  }
}

std::vector<fs::path> png_inputs(const fs::path& p) {
  if (!fs::exists(p)) throw ConfigError("input does not exist: " + p.string());
  if (!fs::is_directory(p)) return {p};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("no PNG images in " + p.string());
  return out;
}

// 1e+05 -> "1e5"; other values as %g
std::string weight_tag(double w) {
  const double k = std::log10(w);
  if (std::abs(k - std::round(k)) < 1e-12 && w >= 1.0) return "1e" + std::to_string(static_cast<int>(std::round(k)));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", w);
  return buf;
}

// ------------------------------------------------------------------ stylize

struct StylizeArgs {
  Common common;
  std::string content, style, config, weights, init;
  std::optional<double> content_weight, style_weight;
  std::optional<int> iterations;
  bool sweep = false;
  std::vector<double> sweep_weights{1e5, 1e6, 1e7, 1e8};
};

void add_stylize_options(CLI::App* cmd, StylizeArgs& a, bool sweep_command) {
  cmd->add_option("content", a.content, "Content PNG or a directory of PNGs")->required();
  cmd->add_option("--style", a.style, "Style PNG, or 'synthetic' for a generated texture")->required();
  cmd->add_option("--config", a.config, "JSON file with NST parameters");
  cmd->add_option("--weights", a.weights, "VGG19 weight file (overrides FBST_VGG19_WEIGHTS)");
  cmd->add_option("--content-weight", a.content_weight);
  cmd->add_option("--style-weight", a.style_weight);
  cmd->add_option("--iterations", a.iterations);
  cmd->add_option("--init", a.init, "content or noise");
  if (sweep_command) {
    cmd->add_option("--style-weights", a.sweep_weights, "Style weights to sweep")->delimiter(',');
  } else {
    cmd->add_flag("--sweep", a.sweep, "Sweep the style weight over 1e5, 1e6, 1e7, 1e8");
  }
  add_common(cmd, a.common, true);
}

int cmd_stylize(const StylizeArgs& a, std::ostream& out) {
  NSTParams params;
  if (!a.config.empty()) params = json_as<NSTParams>(read_json(a.config), "NST parameters");
  if (a.content_weight) params.content_weight = *a.content_weight;
  if (a.style_weight) params.style_weight = *a.style_weight;
  if (a.iterations) params.iterations = *a.iterations;
  if (!a.init.empty()) params.init = parse_nst_init(a.init);
  const std::uint64_t seed = a.common.seed.value_or(0);
  params.seed = derive_seed(seed, 21);
  apply_weights_override(params, a.weights);
  params.validate();

  const bool synthetic = a.style == "synthetic";
  if (!synthetic && !fs::exists(a.style)) throw ConfigError("style image does not exist: " + a.style);
  const std::vector<fs::path> inputs = png_inputs(a.content);
  const FeatureExtractor extractor(params.extractor);
  const std::optional<ImageTensor> style_file = synthetic ? std::nullopt : std::optional(load_image(a.style));
  const fs::path dir = a.common.output;
  fs::create_directories(dir);

  for (const auto& input : inputs) {
    const ImageTensor content = load_image(input);
    const ImageTensor style =
        synthetic ? synthesize_style_image(derive_seed(seed, 11), content.height(), content.width()) : *style_file;
    const std::string stem = input.stem().string();
    if (a.sweep) {
      const auto results = style_weight_sweep(extractor, content, style, params, a.sweep_weights, a.common.jobs);
      for (std::size_t i = 0; i < results.size(); ++i) {
        NSTParams p = params;
        p.style_weight = a.sweep_weights[i];
        const std::string name = stem + "_sw" + weight_tag(a.sweep_weights[i]);
        write_stylized(dir / (name + ".png"), results[i], p);
        write_trace_csv(dir / (name + "_trace.csv"), results[i].loss_trace);
        out << (dir / (name + ".png")).string() << '\n';
      }
    } else {
      const NSTResult r = nst_optimize(extractor, content, style, params);
      write_stylized(dir / (stem + "_stylized.png"), r, params);
      write_trace_csv(dir / (stem + "_stylized_trace.csv"), r.loss_trace);
      out << (dir / (stem + "_stylized.png")).string() << '\n';
    }
  }
  return kExitOk;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string group, config, source, target, layout = "flat", style;
  std::optional<int> epochs;
  int checkpoint_every = 1;
  int images = 200;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const std::uint64_t seed = a.common.seed.value_or(0);
  const bool toy = a.group == "toy";
  TrainingGroupConfig cfg = toy ? toy_training_config(seed) : TrainingGroupConfig::for_group(parse_group_id(a.group));
  if (!a.config.empty()) {
    // the file overlays the group defaults; --group decides the group
    nlohmann::json j = read_json(a.config);
    j.erase("group_id");
    try {
      from_json(j, cfg);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed training config: " + std::string(e.what()));
    }
  }
  if (a.epochs) {
    // keep the decay share of the schedule
    if (cfg.epochs > 0 && *a.epochs > 0) cfg.decay_epochs = cfg.decay_epochs * *a.epochs / cfg.epochs;
    cfg.epochs = *a.epochs;
  }
  if (a.common.seed || a.config.empty()) cfg.seed = seed;
  if (a.checkpoint_every < 1) throw ArgumentError("--checkpoint-every must be positive");
  cfg.validate();
  const fs::path dir = a.common.output;

  if (toy) {
    ToyTaskSpec task;
    task.images = a.images;
    task.seed = cfg.seed;
    task.jobs = a.common.jobs;
    train_toy(task, cfg, dir, a.checkpoint_every, &out);
    return kExitOk;
  }

  if (a.target.empty()) throw ConfigError("--target is required for group " + a.group);
  const DatasetLayout layout = parse_layout(a.layout);
  if (!fs::is_directory(a.target)) throw ConfigError("target dataset does not exist: " + a.target);
  std::vector<SceneRecord> target = load_dataset(a.target, layout, a.common.jobs).records;
  std::vector<SceneRecord> source;
  if (!a.source.empty()) {
    if (!fs::is_directory(a.source)) throw ConfigError("source dataset does not exist: " + a.source);
    source = load_dataset(a.source, layout, a.common.jobs).records;
  } else if (cfg.source_domain.nst_stylized && !a.style.empty()) {
    if (!fs::exists(a.style)) throw ConfigError("style image does not exist: " + a.style);
    NSTParams p = ToyTaskSpec::default_stylize();
    p.seed = derive_seed(cfg.seed, 3);
    source = make_stylized_domain(target, load_image(a.style), p, a.common.jobs);
  } else {
    throw ConfigError("group " + a.group + " needs --source" +
                      (cfg.source_domain.nst_stylized ? std::string(" or --style") : std::string()));
  }
  TrainingOptions options;
  options.checkpoint_dir = dir;
  options.checkpoint_every = a.checkpoint_every;
  options.log_path = dir / "training_log.csv";
  options.on_epoch = [&out](const EpochLog& e, const TranslationModel&) {
    out << "epoch " << e.epoch << ": gen " << e.gen_loss << " disc " << e.disc_loss << " cycle " << e.cycle_loss
        << " identity " << e.identity_loss << std::endl;
  };
  fs::create_directories(dir);
  const TrainingResult r = train(cfg, source, target, options);
  if (r.last_checkpoint) out << "last checkpoint " << r.last_checkpoint->string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------- run

struct RunArgs {
  Common common;
  std::string config, weights;
};

ExperimentConfig load_run_config(const RunArgs& a) {
  ExperimentConfig cfg = load_experiment_config(a.config);
  if (a.common.seed) cfg.set_seed(*a.common.seed);
  if (!a.common.output.empty()) cfg.output = a.common.output;
  cfg.jobs = a.common.jobs;
  apply_weights_override(cfg.forward.nst, a.weights);
  apply_weights_override(cfg.backward.nst, a.weights);
  return cfg;
}

int cmd_run(const RunArgs& a, std::ostream& out) {
  const ExperimentConfig cfg = load_run_config(a);
  const RunOutcome r = run_experiment(cfg, &out);
  for (const auto& f : r.figures) out << "wrote " << f.string() << '\n';
  return r.failures.empty() ? kExitOk : kExitRuntime;
}

// ----------------------------------------------------------------- evaluate

struct EvaluateArgs {
  Common common;
  std::string scores, masks, experiment_id = "evaluate";
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const ExperimentReport r = evaluate_directories(a.scores, a.masks, a.experiment_id);
  const fs::path path = fs::path(a.common.output) / "report.json";
  write_report(path, r);
  out << "wrote " << path.string() << " (" << r.scenes.size() << " scenes, " << r.exclusions.size()
      << " excluded)\n";
  return kExitOk;
}

// ------------------------------------------------------------------- figure

struct FigureArgs {
  Common common;
  std::string run_dir, experiment_id;
};

int cmd_figure(const FigureArgs& a, std::ostream& out) {
  std::string id = a.experiment_id;
  if (id.empty()) {
    const fs::path report = fs::path(a.run_dir) / "report.json";
    if (!fs::exists(report)) throw ConfigError("no report.json in " + a.run_dir + "; pass --experiment-id");
    id = read_json(report).at("experiment_id").get<std::string>();
  }
  const fs::path dir = a.common.output.empty() ? fs::path(a.run_dir) : fs::path(a.common.output);
  for (const auto& f : render_run_figures(a.run_dir, id, dir)) out << "wrote " << f.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Forward-backward style transfer anomaly detection", "fbst"};
  app.require_subcommand(1);

  StylizeArgs stylize, sweep;
  sweep.sweep = true;
  add_stylize_options(app.add_subcommand("stylize", "Forward NST on one image or a directory"), stylize, false);
  add_stylize_options(app.add_subcommand("sweep", "NST style-weight sweep"), sweep, true);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a CycleGAN group (A-F) or the toy task");
  train_cmd->add_option("--group", train_args.group, "A, B, C, D, E, F or toy")->required();
  train_cmd->add_option("--config", train_args.config, "JSON training config");
  train_cmd->add_option("--source", train_args.source, "Source-domain dataset root");
  train_cmd->add_option("--target", train_args.target, "Target-domain dataset root");
  train_cmd->add_option("--layout", train_args.layout, "flat or cityscapes_like");
  train_cmd->add_option("--style", train_args.style, "Style image for NST-stylized sources (E, F)");
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every);
  train_cmd->add_option("--images", train_args.images, "Toy task size")->check(CLI::Range(2, 100000));
  add_common(train_cmd, train_args.common, true);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Full pipeline, report and figures from an experiment config");
  run_cmd->add_option("--config", run_args.config, "Experiment config JSON")->required();
  run_cmd->add_option("--weights", run_args.weights, "VGG19 weight file (overrides FBST_VGG19_WEIGHTS)");
  add_common(run_cmd, run_args.common, false);

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Metrics over precomputed score maps");
  eval_cmd->add_option("scores", eval_args.scores, "Score map directory")->required();
  eval_cmd->add_option("masks", eval_args.masks, "Mask directory")->required();
  eval_cmd->add_option("--experiment-id", eval_args.experiment_id);
  add_common(eval_cmd, eval_args.common, true);

  FigureArgs fig_args;
  auto* fig_cmd = app.add_subcommand("figure", "Render figures from a run directory");
  fig_cmd->add_option("run_dir", fig_args.run_dir, "Directory written by 'run'")->required();
  fig_cmd->add_option("--experiment-id", fig_args.experiment_id);
  add_common(fig_cmd, fig_args.common, false);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (app.got_subcommand("stylize")) return cmd_stylize(stylize, out);
    if (app.got_subcommand("sweep")) return cmd_stylize(sweep, out);
    if (train_cmd->parsed()) return cmd_train(train_args, out);
    if (run_cmd->parsed()) return cmd_run(run_args, out);
    if (eval_cmd->parsed()) return cmd_evaluate(eval_args, out);
    if (fig_cmd->parsed()) return cmd_figure(fig_args, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace fbst
