#include "fbst/errors.hpp"
#include "fbst/eval/figures.hpp"
#include "fbst/eval/metrics.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

using namespace fbst;

namespace {

AnomalyMask random_mask(Rng& rng, int h, int w, double p = 0.2) {
  std::vector<std::uint8_t> v(static_cast<std::size_t>(h) * w);
  for (auto& m : v) m = rng.uniform(0.0, 1.0) < p ? 1 : 0;
  v[0] = 1;
  v[1] = 0;
  return AnomalyMask(h, w, std::move(v));
}

// quantized scores so that ties occur
AnomalyScoreMap random_scores(Rng& rng, int h, int w, int levels = 0) {
  std::vector<double> v(static_cast<std::size_t>(h) * w);
  for (double& s : v) {
    s = rng.uniform(0.0, 1.0);
    if (levels > 0) s = std::floor(s * levels) / levels;
  }
  return AnomalyScoreMap(h, w, std::move(v));
}

AnomalyScoreMap scores_from_mask(const AnomalyMask& m, double in = 1.0, double out = 0.0) {
  std::vector<double> v;
  for (auto b : m.values()) v.push_back(b ? in : out);
  return AnomalyScoreMap(m.height(), m.width(), std::move(v));
}

AnomalyScoreMap transformed(const AnomalyScoreMap& s, double (*f)(double)) {
  std::vector<double> v;
  for (double x : s.values()) v.push_back(f(x));
  return AnomalyScoreMap(s.height(), s.width(), std::move(v));
}

double pairwise_auroc(const AnomalyScoreMap& s, const AnomalyMask& m) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!m.values()[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (m.values()[j]) continue;
      pairs += 1.0;
      if (s.values()[i] > s.values()[j]) wins += 1.0;
      else if (s.values()[i] == s.values()[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

double brute_force_ap(const AnomalyScoreMap& s, const AnomalyMask& m) {
  std::set<double, std::greater<>> thresholds(s.values().begin(), s.values().end());
  const double positives = static_cast<double>(m.count());
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.values()[i] >= t) (m.values()[i] ? tp : fp) += 1.0;
    const double recall = tp / positives;
    ap += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
  }
  return ap;
}

}  // namespace

TEST_CASE("auroc") {
  Rng rng(5);
  const AnomalyMask m = random_mask(rng, 12, 10);
  CHECK(auroc(scores_from_mask(m), m) == 1.0);
  CHECK(auroc(scores_from_mask(m, 0.0, 1.0), m) == 0.0);
  CHECK(auroc(AnomalyScoreMap(12, 10, std::vector<double>(120, 0.3)), m) == 0.5);

  for (int trial = 0; trial < 20; ++trial) {
    const AnomalyMask mk = random_mask(rng, 16, 16, 0.1 + 0.04 * trial);
    const AnomalyScoreMap s = random_scores(rng, 16, 16, trial % 2 ? 7 : 0);
    const double a = auroc(s, mk);
    CHECK(std::abs(a - pairwise_auroc(s, mk)) <= 1e-9);
    CHECK(std::abs(auroc(transformed(s, [](double x) { return x * x; }), mk) - a) <= 1e-12);
    CHECK(std::abs(auroc(transformed(s, [](double x) { return 0.5 * x + 0.1; }), mk) - a) <= 1e-12);
    CHECK(std::abs(auroc(transformed(s, [](double x) { return 1.0 - x; }), mk) - (1.0 - a)) <= 1e-12);
  }

  CHECK_THROWS_AS(auroc(random_scores(rng, 4, 4), AnomalyMask::zeros(4, 4)), UndefinedMetric);
  CHECK_THROWS_AS(auroc(random_scores(rng, 4, 4), AnomalyMask(4, 4, std::vector<std::uint8_t>(16, 1))), UndefinedMetric);
  CHECK_THROWS_AS(auroc(random_scores(rng, 4, 5), m), ArgumentError);
}

TEST_CASE("average precision") {
  Rng rng(6);
  const AnomalyMask m = random_mask(rng, 10, 10);
  CHECK(average_precision(scores_from_mask(m), m) == 1.0);
  CHECK(average_precision(AnomalyScoreMap(10, 10, std::vector<double>(100, 0.2)), m) ==
        doctest::Approx(m.fraction()).epsilon(1e-15));
  for (int trial = 0; trial < 20; ++trial) {
    const AnomalyMask mk = random_mask(rng, 14, 9, 0.05 + 0.03 * trial);
    const AnomalyScoreMap s = random_scores(rng, 14, 9, trial % 2 ? 5 : 0);
    const double ap = average_precision(s, mk);
    CHECK(std::abs(ap - brute_force_ap(s, mk)) <= 1e-9);
    CHECK(ap > 0.0);
    CHECK(ap <= 1.0);
    CHECK(std::abs(average_precision(transformed(s, [](double x) { return std::sqrt(x); }), mk) - ap) <= 1e-12);
  }
  CHECK_THROWS_AS(average_precision(random_scores(rng, 4, 4), AnomalyMask::zeros(4, 4)), UndefinedMetric);
}

TEST_CASE("contrast ratio and noise level") {
  const AnomalyMask m(2, 2, {1, 0, 0, 0});
  CHECK(contrast_ratio(AnomalyScoreMap(2, 2, {0.9, 0, 0, 0}), m) == std::numeric_limits<double>::infinity());
  CHECK(contrast_ratio(AnomalyScoreMap(2, 2, {0.9, 0.1, 0.1, 0.1}), m) == doctest::Approx(9.0));
  CHECK(contrast_ratio(AnomalyScoreMap(2, 2, {0.4, 0.4, 0.4, 0.4}), m) == doctest::Approx(1.0));
  CHECK(contrast_ratio(AnomalyScoreMap(2, 2, {0, 0, 0, 0}), m) == 0.0);
  CHECK(noise_level(AnomalyScoreMap(2, 2, {0.9, 0.1, 0.2, 0.3}), m) == doctest::Approx(0.2));

  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const AnomalyMask mk = random_mask(rng, 8, 8, 0.3);
    const AnomalyScoreMap s = random_scores(rng, 8, 8);
    double in = 0, out = 0;
    for (std::size_t i = 0; i < s.size(); ++i) (mk.values()[i] ? in : out) += s.values()[i];
    in /= static_cast<double>(mk.count());
    out /= static_cast<double>(s.size() - mk.count());
    CHECK(noise_level(s, mk) == doctest::Approx(out));
    CHECK(contrast_ratio(s, mk) == doctest::Approx(in / out));
  }
}

TEST_CASE("summaries") {
  CHECK(summarize({}).count == 0);
  CHECK(!summarize({}).mean);
  const auto odd = summarize({3, 1, 2});
  CHECK(*odd.mean == 2.0);
  CHECK(*odd.median == 2.0);
  const auto even = summarize({4, 1, 3, 2});
  CHECK(*even.median == 2.5);
  CHECK(*summarize({1, std::numeric_limits<double>::infinity()}).mean == std::numeric_limits<double>::infinity());
}

TEST_CASE("experiment report") {
  Rng rng(8);
  std::vector<ScoredScene> scenes;
  for (int i = 0; i < 4; ++i) {
    const AnomalyMask m = random_mask(rng, 8, 8, 0.25);
    scenes.push_back({"s" + std::to_string(i), random_scores(rng, 8, 8), m, "scenes/s" + std::to_string(i)});
  }
  scenes.push_back({"nomask", random_scores(rng, 8, 8), std::nullopt, ""});
  scenes.push_back({"allclean", random_scores(rng, 8, 8), AnomalyMask::zeros(8, 8), ""});
  scenes.push_back({"badsize", random_scores(rng, 8, 8), AnomalyMask::zeros(4, 4), ""});
  const nlohmann::json config = {{"experiment", "exp2_nst"}, {"nst", {{"iterations", 300}}}};
  const auto report = build_report("r1", scenes, {{"forward", "nst"}}, config);

  REQUIRE(report.scenes.size() == 4);
  CHECK(report.exclusions.size() == 3);
  CHECK(report.exclusions[0].scene_id == "nomask");
  CHECK(report.exclusions[0].reason == "no mask");

  for (const char* name : {"auroc", "average_precision", "contrast_ratio", "noise_level"}) {
    std::vector<double> v;
    for (const auto& s : report.scenes) {
      const std::string n = name;
      v.push_back(n == "auroc" ? s.auroc : n == "average_precision" ? s.average_precision
                                       : n == "contrast_ratio"      ? s.contrast_ratio
                                                                    : s.noise_level);
    }
    const auto agg = report.aggregate(name);
    CHECK(agg.count == 4);
    double sum = 0;
    for (double x : v) sum += x;
    CHECK(*agg.mean == doctest::Approx(sum / 4));
  }
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(report.scenes[i].auroc == auroc(scenes[i].score_map, *scenes[i].mask));

  const auto j = report.to_json();
  CHECK(j.at("experiment_id") == "r1");
  CHECK(j.at("scenes").size() == 4);
  CHECK(j.at("scenes")[0].at("artifact_dir") == "scenes/s0");
  CHECK(j.at("exclusions").size() == 3);
  CHECK(j.at("config_hash") == report.config_hash);
  CHECK(report.config_hash.size() == 64);
  CHECK(build_report("r1", scenes, {{"forward", "nst"}}, config).to_json() == j);
  CHECK(build_report("r1", scenes, nullptr, {{"experiment", "exp1_cyclegan"}}).config_hash != report.config_hash);
}

TEST_CASE("report edge cases") {
  const AnomalyMask m(2, 2, {1, 0, 0, 0});
  SUBCASE("perfect separation serializes inf") {
    const auto r = build_report("inf", {{"a", AnomalyScoreMap(2, 2, {0.9, 0, 0, 0}), m, ""}});
    const auto j = r.to_json();
    CHECK(j.at("scenes")[0].at("contrast_ratio") == "inf");
    CHECK(j.at("aggregates").at("contrast_ratio").at("mean") == "inf");
    CHECK(j.at("aggregates").at("auroc").at("mean") == 1.0);
    CHECK(json_number(2.5) == 2.5);
    CHECK(json_number(-std::numeric_limits<double>::infinity()) == "-inf");
  }
  SUBCASE("constant maps are flagged and left out of the auroc aggregate") {
    const auto r = build_report("zero", {{"a", AnomalyScoreMap::zeros(2, 2), m, ""}});
    REQUIRE(r.scenes.size() == 1);
    CHECK(r.scenes[0].constant_scores);
    CHECK(r.scenes[0].auroc == 0.5);
    CHECK(r.aggregate("auroc").count == 0);
    CHECK(r.to_json().at("aggregates").at("auroc").at("mean").is_null());
    CHECK(!r.warnings.empty());
  }
  SUBCASE("nothing scorable") {
    const auto r = build_report("none", {{"a", AnomalyScoreMap::zeros(2, 2), std::nullopt, ""}});
    CHECK(r.scenes.empty());
    CHECK(r.exclusions.size() == 1);
    CHECK(!r.warnings.empty());
    CHECK(r.aggregate("average_precision").count == 0);
  }
  CHECK_THROWS_AS(build_report("x", {}).aggregate("f1"), ArgumentError);
}

TEST_CASE("mask boundary and overlay") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 9 + trial, w = 12;
    const AnomalyMask m = random_mask(rng, h, w, 0.5);
    const AnomalyMask b = mask_boundary(m);
    // oracle: mask AND NOT erosion, with outside-image neighbours counted as inside
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        auto in = [&](int yy, int xx) { return yy < 0 || xx < 0 || yy >= h || xx >= w || m.at(yy, xx); };
        const bool eroded = in(y - 1, x) && in(y + 1, x) && in(y, x - 1) && in(y, x + 1);
        CHECK(b.at(y, x) == ((m.at(y, x) && !eroded) ? 1 : 0));
      }
    const ImageTensor img(fbst::test::random_tensor(3, h, w, rng, 0.0, 0.9));
    const ImageTensor o = overlay_boundary(img, m);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          const double expect = b.at(y, x) ? (c == 0 ? 1.0 : 0.0) : img.at(c, y, x);
          CHECK(o.at(c, y, x) == expect);
        }
  }
  const ImageTensor gray = ImageTensor::filled(1, 8, 8, 0.5);
  CHECK(overlay_boundary(gray, AnomalyMask::zeros(8, 8)).channels() == 3);
  CHECK_THROWS_AS(overlay_boundary(gray, AnomalyMask::zeros(8, 9)), ArgumentError);
}

TEST_CASE("render_grid") {
  const ImageTensor a = ImageTensor::filled(3, 16, 20, 0.0);
  const ImageTensor b = ImageTensor::filled(1, 16, 10, 1.0);
  SUBCASE("strip geometry without labels") {
    const Raster8 r = render_grid({{"", {{a}, {b}, {a}, {b}}, std::nullopt}}, {}, {2, 0, 1});
    CHECK(r.channels == 3);
    CHECK(r.width == 2 + 20 + 2 + 10 + 2 + 20 + 2 + 10 + 2);
    CHECK(r.height == 2 + 16 + 2);
    // first cell is black, the padding white
    CHECK(r.pixels[(2 * r.width + 2) * 3] == 0);
    CHECK(r.pixels[0] == 255);
    CHECK(r.pixels[(2 * r.width + 24) * 3] == 255);
  }
  SUBCASE("labels and scale") {
    const Raster8 r = render_grid({{"ab", {{a}, {a}}, std::nullopt}, {"abcd", {{a}, {a}}, std::nullopt}},
                                  {"x", "y"}, {4, 0, 2});
    const int label_w = 4 * 6 - 1;
    CHECK(r.width == 4 + label_w + 4 + 2 * (40 + 4));
    CHECK(r.height == 4 + 7 + 4 + 2 * (32 + 4));
    CHECK(r == render_grid({{"ab", {{a}, {a}}, std::nullopt}, {"abcd", {{a}, {a}}, std::nullopt}}, {"x", "y"},
                           {4, 0, 2}));
  }
  SUBCASE("highlighted cells draw the mask boundary") {
    std::vector<std::uint8_t> mv(16 * 20, 0);
    for (int y = 4; y < 8; ++y)
      for (int x = 4; x < 8; ++x) mv[y * 20 + x] = 1;
    const AnomalyMask m(16, 20, mv);
    const Raster8 r = render_grid({{"", {{a, true}}, m}}, {}, {0, 0, 1});
    CHECK(r.pixels[(4 * 20 + 4) * 3 + 0] == 255);
    CHECK(r.pixels[(4 * 20 + 4) * 3 + 1] == 0);
    CHECK(r.pixels[(5 * 20 + 5) * 3 + 0] == 0);
  }
  CHECK_THROWS_AS(render_grid({}), ArgumentError);
  CHECK_THROWS_AS(render_grid({{"", {}, std::nullopt}}), ArgumentError);
  CHECK_THROWS_AS(render_grid({{"", {{a}, {ImageTensor::filled(3, 15, 20, 0.0)}}, std::nullopt}}), ArgumentError);
  CHECK_THROWS_AS(render_grid({{"", {{a, true}}, std::nullopt}}), ArgumentError);
  CHECK_THROWS_AS(render_grid({{"", {{a, true}}, AnomalyMask::zeros(8, 8)}}), ArgumentError);
}

TEST_CASE("score map image") {
  const AnomalyScoreMap big(8, 8, std::vector<double>(64, 0.25));
  CHECK(score_map_image(big).at(0, 0, 0) == 0.25);
  CHECK(score_map_image(big, true).at(0, 3, 3) == 1.0);
  CHECK(score_map_image(AnomalyScoreMap::zeros(8, 8), true).at(0, 0, 0) == 0.0);
}
