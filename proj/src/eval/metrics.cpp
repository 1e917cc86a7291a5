#include "fbst/eval/metrics.hpp"

#include "fbst/errors.hpp"
#include "fbst/util/hash.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>

namespace fbst {

namespace {

constexpr double kDenominatorFloor = 1e-12;

void check_inputs(const AnomalyScoreMap& s, const AnomalyMask& m) {
  if (s.height() != m.height() || s.width() != m.width())
    throw ArgumentError("score map is " + std::to_string(s.height()) + "x" + std::to_string(s.width()) +
                        " but mask is " + std::to_string(m.height()) + "x" + std::to_string(m.width()));
  if (!m.has_both_classes()) throw UndefinedMetric("mask contains a single class");
}

struct TieGroup {
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
};

// Groups of equal score, ascending.
std::vector<TieGroup> tie_groups(const AnomalyScoreMap& s, const AnomalyMask& m) {
  std::vector<std::uint32_t> order(s.size());
  std::iota(order.begin(), order.end(), 0u);
  const auto& v = s.values();
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return v[a] < v[b]; });
  std::vector<TieGroup> groups;
  for (std::size_t i = 0; i < order.size();) {
    TieGroup g;
    std::size_t j = i;
    for (; j < order.size() && v[order[j]] == v[order[i]]; ++j)
      (m.values()[order[j]] ? g.positives : g.negatives) += 1;
    groups.push_back(g);
    i = j;
  }
  return groups;
}

}  // namespace

double auroc(const AnomalyScoreMap& scores, const AnomalyMask& mask) {
  check_inputs(scores, mask);
  // twice the Mann-Whitney U, kept integral so ties and perfect splits are exact
  unsigned __int128 twice_u = 0;
  std::uint64_t negatives_below = 0, n_pos = 0, n_neg = 0;
  for (const TieGroup& g : tie_groups(scores, mask)) {
    twice_u += static_cast<unsigned __int128>(g.positives) * (2 * negatives_below + g.negatives);
    negatives_below += g.negatives;
    n_pos += g.positives;
    n_neg += g.negatives;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double average_precision(const AnomalyScoreMap& scores, const AnomalyMask& mask) {
  check_inputs(scores, mask);
  auto groups = tie_groups(scores, mask);
  std::reverse(groups.begin(), groups.end());
  const double n_pos = static_cast<double>(mask.count());
  std::uint64_t tp = 0, fp = 0;
  double ap = 0.0;
  for (const TieGroup& g : groups) {
    tp += g.positives;
    fp += g.negatives;
    if (g.positives == 0) continue;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += precision * (static_cast<double>(g.positives) / n_pos);
  }
  return ap;
}

namespace {

std::pair<double, double> class_means(const AnomalyScoreMap& s, const AnomalyMask& m) {
  double in = 0.0, out = 0.0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (m.values()[i]) {
      in += s.values()[i];
      ++n_in;
    } else {
      out += s.values()[i];
      ++n_out;
    }
  }
  return {in / static_cast<double>(n_in), out / static_cast<double>(n_out)};
}

}  // namespace

double contrast_ratio(const AnomalyScoreMap& scores, const AnomalyMask& mask) {
  check_inputs(scores, mask);
  const auto [in, out] = class_means(scores, mask);
  if (out < kDenominatorFloor && in > 0.0) return std::numeric_limits<double>::infinity();
  return in / std::max(out, kDenominatorFloor);
}

double noise_level(const AnomalyScoreMap& scores, const AnomalyMask& mask) {
  check_inputs(scores, mask);
  return class_means(scores, mask).second;
}

SceneMetrics scene_metrics(const std::string& scene_id, const AnomalyScoreMap& scores, const AnomalyMask& mask) {
  const auto& v = scores.values();
  const bool constant = std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  return {scene_id,
          auroc(scores, mask),
          average_precision(scores, mask),
          contrast_ratio(scores, mask),
          noise_level(scores, mask),
          mask.fraction(),
          constant};
}

MetricSummary summarize(std::vector<double> values) {
  MetricSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

MetricSummary ExperimentReport::aggregate(const std::string& metric) const {
  if (metric != "auroc" && metric != "average_precision" && metric != "contrast_ratio" && metric != "noise_level")
    throw ArgumentError("unknown metric '" + metric + "'");
  std::vector<double> v;
  for (const auto& s : scenes) {
    if (metric == "auroc") {
      if (!s.constant_scores) v.push_back(s.auroc);
    } else if (metric == "average_precision") {
      v.push_back(s.average_precision);
    } else if (metric == "contrast_ratio") {
      v.push_back(s.contrast_ratio);
    } else {
      v.push_back(s.noise_level);
    }
  }
  return summarize(std::move(v));
}

nlohmann::json json_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v) { return v ? json_number(*v) : nlohmann::json(); }

}  // namespace

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json scene_list = nlohmann::json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& s = scenes[i];
    scene_list.push_back({{"scene_id", s.scene_id},
                          {"auroc", json_number(s.auroc)},
                          {"average_precision", json_number(s.average_precision)},
                          {"contrast_ratio", json_number(s.contrast_ratio)},
                          {"noise_level", json_number(s.noise_level)},
                          {"prevalence", json_number(s.prevalence)},
                          {"constant_scores", s.constant_scores},
                          {"artifact_dir", i < artifact_dirs.size() ? artifact_dirs[i] : ""}});
  }
  nlohmann::json aggregates = nlohmann::json::object();
  for (const char* m : {"auroc", "average_precision", "contrast_ratio", "noise_level"}) {
    const MetricSummary s = aggregate(m);
    aggregates[m] = {{"count", s.count}, {"mean", optional_number(s.mean)}, {"median", optional_number(s.median)}};
  }
  nlohmann::json excl = nlohmann::json::array();
  for (const auto& e : exclusions) excl.push_back({{"scene_id", e.scene_id}, {"reason", e.reason}});
  return {{"experiment_id", experiment_id},
          {"backend", backend},
          {"scenes", scene_list},
          {"aggregates", aggregates},
          {"exclusions", excl},
          {"warnings", warnings},
          {"config", config},
          {"config_hash", config_hash}};
}

ExperimentReport build_report(const std::string& experiment_id, const std::vector<ScoredScene>& scenes,
                              nlohmann::json backend, nlohmann::json config) {
  ExperimentReport r;
  r.experiment_id = experiment_id;
  r.backend = std::move(backend);
  r.config = std::move(config);
  r.config_hash = sha256_hex(r.config.dump());
  for (const auto& s : scenes) {
    if (!s.mask) {
      r.exclusions.push_back({s.scene_id, "no mask"});
      continue;
    }
    try {
      r.scenes.push_back(scene_metrics(s.scene_id, s.score_map, *s.mask));
      r.artifact_dirs.push_back(s.artifact_dir);
    } catch (const UndefinedMetric& e) {
      r.exclusions.push_back({s.scene_id, e.what()});
    } catch (const ArgumentError& e) {
      r.exclusions.push_back({s.scene_id, e.what()});
    }
  }
  if (r.scenes.empty()) r.warnings.push_back("no scorable scenes: every scene lacks a usable two-class mask");
  const std::size_t constant =
      std::count_if(r.scenes.begin(), r.scenes.end(), [](const SceneMetrics& m) { return m.constant_scores; });
  if (constant > 0)
    r.warnings.push_back(std::to_string(constant) +
                         " scene(s) have constant score maps; their auroc is 0.5 by the tie rule and is left "
                         "out of the auroc aggregate");
  return r;
}

void write_report(const std::filesystem::path& path, const ExperimentReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << report.to_json().dump(2) << '\n';
  if (!out) throw IoError("cannot write report " + path.string());
}

}  // namespace fbst
