#pragma once

#include "fbst/core/image.hpp"
#include "fbst/pipeline/pipeline.hpp"

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace fbst {

// All metrics need equal dimensions (ArgumentError otherwise) and a mask with
// both classes (UndefinedMetric otherwise).

// Mann-Whitney AUROC with ties counted one half, from tie groups of the
// sorted scores.
double auroc(const AnomalyScoreMap& scores, const AnomalyMask& mask);
// Step-wise area under precision-recall over the distinct score thresholds.
double average_precision(const AnomalyScoreMap& scores, const AnomalyMask& mask);
// mean(inside) / max(mean(outside), 1e-12); +inf when the outside mean is
// below the floor and the inside mean is positive.
double contrast_ratio(const AnomalyScoreMap& scores, const AnomalyMask& mask);
// mean score outside the mask
double noise_level(const AnomalyScoreMap& scores, const AnomalyMask& mask);

struct SceneMetrics {
  std::string scene_id;
  double auroc;
  double average_precision;
  double contrast_ratio;
  double noise_level;
  double prevalence;
  bool constant_scores;  // every pixel tied; auroc is 0.5 by the tie rule
};

SceneMetrics scene_metrics(const std::string& scene_id, const AnomalyScoreMap& scores, const AnomalyMask& mask);

struct Exclusion {
  std::string scene_id;
  std::string reason;
};

struct MetricSummary {
  std::size_t count = 0;
  std::optional<double> mean;  // empty when count == 0
  std::optional<double> median;
};

MetricSummary summarize(std::vector<double> values);

struct ScoredScene {
  std::string scene_id;
  AnomalyScoreMap score_map;
  std::optional<AnomalyMask> mask;
  std::string artifact_dir;  // relative to the report, may be empty
};

struct ExperimentReport {
  std::string experiment_id;
  nlohmann::json backend;
  std::vector<SceneMetrics> scenes;
  std::vector<std::string> artifact_dirs;  // parallel to scenes
  std::vector<Exclusion> exclusions;
  std::vector<std::string> warnings;
  nlohmann::json config;
  std::string config_hash;  // sha256 of the canonical config dump

  // auroc excludes constant-score scenes; the other metrics use every scored scene
  MetricSummary aggregate(const std::string& metric) const;
  nlohmann::json to_json() const;
};

ExperimentReport build_report(const std::string& experiment_id, const std::vector<ScoredScene>& scenes,
                              nlohmann::json backend = nullptr, nlohmann::json config = nlohmann::json::object());

// +inf as the string "inf" (and -inf / nan likewise); finite values unchanged.
nlohmann::json json_number(double v);

void write_report(const std::filesystem::path& path, const ExperimentReport& report);

}  // namespace fbst
