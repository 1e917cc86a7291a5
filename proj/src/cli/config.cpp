#include "fbst/cli/config.hpp"

#include "fbst/errors.hpp"
#include "fbst/nst/params_json.hpp"
#include "fbst/util/random.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>

namespace fbst {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

DatasetSource parse_dataset(const nlohmann::json& j, const std::filesystem::path& base, const std::string& where) {
  reject_unknown(j, {"root", "layout", "limit"}, where);
  DatasetSource d;
  d.root = resolve(base, j.at("root").get<std::string>());
  if (j.contains("layout")) d.layout = parse_layout(j.at("layout").get<std::string>());
  d.limit = j.value("limit", 0);
  return d;
}

BackendSpec parse_backend(const nlohmann::json& j, const std::filesystem::path& base, const std::string& where) {
  reject_unknown(j, {"kind", "nst", "style", "checkpoint", "direction"}, where);
  BackendSpec b;
  b.kind = parse_backend_kind(j.at("kind").get<std::string>());
  if (j.contains("nst")) b.nst = j.at("nst").get<NSTParams>();
  b.style = resolve(base, j.value("style", std::string()));
  b.checkpoint = resolve(base, j.value("checkpoint", std::string()));
  if (j.contains("direction")) b.direction = parse_direction(j.at("direction").get<std::string>());
  return b;
}

const char* layout_name(DatasetLayout l) { return l == DatasetLayout::flat ? "flat" : "cityscapes_like"; }

nlohmann::json backend_snapshot(const BackendSpec& b, bool forward) {
  nlohmann::json j = {{"kind", to_string(b.kind)}};
  if (b.kind == BackendKind::nst) {
    j["nst"] = b.nst;
    j["style"] = b.style.empty() ? "synthetic" : b.style.string();
  } else if (b.kind == BackendKind::cyclegan) {
    j["checkpoint"] = b.checkpoint.string();
    j["direction"] = to_string(b.direction.value_or(forward ? Direction::b_to_a : Direction::a_to_b));
  }
  return j;
}

void require_exists(const std::filesystem::path& p, const std::string& what) {
  if (p.empty()) throw ConfigError(what + " is not set");
  if (!std::filesystem::exists(p)) throw ConfigError(what + " does not exist: " + p.string());
}

void validate_backend(const BackendSpec& b, bool toy, const char* side) {
  const std::string name = std::string(side) + " backend";
  if (b.kind == BackendKind::nst) {
    try {
      b.nst.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(name + ": " + e.what());
    }
    if (b.style.empty()) {
      if (!toy) throw ConfigError(name + ": nst needs a style image");
    } else {
      require_exists(b.style, name + " style image");
    }
    if (b.nst.extractor.kind == ExtractorKind::pretrained_vgg19)
      require_exists(b.nst.extractor.weights_path, name + " VGG19 weights (set FBST_VGG19_WEIGHTS or --weights)");
  } else if (b.kind == BackendKind::cyclegan) {
    require_exists(b.checkpoint, name + " checkpoint");
    require_exists(checkpoint_sidecar(b.checkpoint), name + " checkpoint sidecar");
  }
}

}  // namespace

ExperimentKind parse_experiment_kind(const std::string& s) {
  if (s == "exp1_cyclegan") return ExperimentKind::exp1_cyclegan;
  if (s == "exp2_nst") return ExperimentKind::exp2_nst;
  if (s == "exp3_hybrid") return ExperimentKind::exp3_hybrid;
  if (s == "toy") return ExperimentKind::toy;
  throw ConfigError("unknown experiment '" + s + "' (expected exp1_cyclegan, exp2_nst, exp3_hybrid or toy)");
}

const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::exp1_cyclegan: return "exp1_cyclegan";
    case ExperimentKind::exp2_nst: return "exp2_nst";
    case ExperimentKind::exp3_hybrid: return "exp3_hybrid";
    case ExperimentKind::toy: return "toy";
  }
  return "?";
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  forward.nst.seed = derive_seed(s, 21);
  backward.nst.seed = derive_seed(s, 22);
}

void ExperimentConfig::validate() const {
  const bool is_toy = experiment == ExperimentKind::toy;
  const auto pairing = [&](BackendKind f, BackendKind b) {
    if (forward.kind != f || backward.kind != b)
      throw ConfigError(std::string(to_string(experiment)) + " needs " + to_string(f) + "/" + to_string(b) +
                        " backends, got " + to_string(forward.kind) + "/" + to_string(backward.kind));
  };
  switch (experiment) {
    case ExperimentKind::exp1_cyclegan: pairing(BackendKind::cyclegan, BackendKind::cyclegan); break;
    case ExperimentKind::exp2_nst: pairing(BackendKind::nst, BackendKind::nst); break;
    case ExperimentKind::exp3_hybrid: pairing(BackendKind::nst, BackendKind::cyclegan); break;
    case ExperimentKind::toy: break;
  }
  if (experiment_id.empty()) throw ConfigError("experiment_id must not be empty");
  for (char c : experiment_id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
      throw ConfigError("experiment_id may only contain letters, digits, '_', '-' and '.'");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (pipeline.blur_radius < 0) throw ConfigError("blur_radius must be nonnegative");
  if (is_toy) {
    if (toy.count < 1) throw ConfigError("toy.count must be at least 1");
    if (toy.size < ImageTensor::kMinSide) throw ConfigError("toy.size must be at least 8");
  } else {
    if (!dataset) throw ConfigError(std::string(to_string(experiment)) + " needs a dataset");
    require_exists(dataset->root, "dataset root");
    if (dataset->limit < 0) throw ConfigError("dataset.limit must be nonnegative");
  }
  validate_backend(forward, is_toy, "forward");
  validate_backend(backward, is_toy, "backward");
}

nlohmann::json ExperimentConfig::snapshot() const {
  nlohmann::json j = {{"experiment", to_string(experiment)},
                      {"experiment_id", experiment_id},
                      {"seed", seed},
                      {"forward", backend_snapshot(forward, true)},
                      {"backward", backend_snapshot(backward, false)},
                      {"pipeline", {{"metric", to_string(pipeline.metric)}, {"blur_radius", pipeline.blur_radius}}}};
  if (experiment == ExperimentKind::toy) j["toy"] = {{"count", toy.count}, {"size", toy.size}};
  if (dataset)
    j["dataset"] = {{"root", dataset->root.string()}, {"layout", layout_name(dataset->layout)}, {"limit", dataset->limit}};
  return j;
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  try {
    reject_unknown(j, {"experiment", "experiment_id", "seed", "jobs", "output", "dataset", "toy", "forward", "backward",
                       "pipeline"},
                   "experiment config");
    ExperimentConfig c;
    c.experiment = parse_experiment_kind(j.at("experiment").get<std::string>());
    c.experiment_id = j.value("experiment_id", std::string(to_string(c.experiment)));
    c.seed = j.value("seed", std::uint64_t{0});
    c.jobs = j.value("jobs", 1);
    if (j.contains("output")) c.output = resolve(base_dir, j.at("output").get<std::string>());
    if (j.contains("dataset")) c.dataset = parse_dataset(j.at("dataset"), base_dir, "dataset");
    if (j.contains("toy")) {
      reject_unknown(j.at("toy"), {"count", "size"}, "toy");
      c.toy.count = j.at("toy").value("count", c.toy.count);
      c.toy.size = j.at("toy").value("size", c.toy.size);
    }
    if (j.contains("forward")) {
      c.forward = parse_backend(j.at("forward"), base_dir, "forward");
    } else if (c.experiment == ExperimentKind::exp1_cyclegan) {
      c.forward.kind = BackendKind::cyclegan;
    }
    if (j.contains("backward")) {
      c.backward = parse_backend(j.at("backward"), base_dir, "backward");
    } else if (c.experiment == ExperimentKind::exp1_cyclegan || c.experiment == ExperimentKind::exp3_hybrid) {
      c.backward.kind = BackendKind::cyclegan;
    }
    if (j.contains("pipeline")) {
      const auto& p = j.at("pipeline");
      reject_unknown(p, {"metric", "blur_radius"}, "pipeline");
      if (p.contains("metric")) c.pipeline.metric = parse_diff_metric(p.at("metric").get<std::string>());
      c.pipeline.blur_radius = p.value("blur_radius", 0);
    }
    c.set_seed(c.seed);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

void apply_weights_override(NSTParams& params, const std::filesystem::path& override_path) {
  auto& ex = params.extractor;
  if (ex.kind != ExtractorKind::pretrained_vgg19) return;
  if (!override_path.empty()) {
    ex.weights_path = override_path;
  } else if (const char* env = std::getenv("FBST_VGG19_WEIGHTS"); env && *env) {
    ex.weights_path = env;
  }
  if (ex.weights_sha256.empty() && !ex.weights_path.empty()) {
    std::ifstream in(ex.weights_path.string() + ".sha256");
    in >> ex.weights_sha256;
  }
}

}  // namespace fbst
