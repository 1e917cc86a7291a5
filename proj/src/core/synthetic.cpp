#include "fbst/core/synthetic.hpp"

#include "fbst/errors.hpp"
#include "fbst/util/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace fbst {

BasePattern parse_base_pattern(const std::string& name) {
  if (name == "gradient") return BasePattern::gradient;
  if (name == "stripes") return BasePattern::stripes;
  if (name == "checker") return BasePattern::checker;
  throw ArgumentError("unknown base pattern '" + name + "'");
}

AnomalyShape parse_anomaly_shape(const std::string& name) {
  if (name == "none") return AnomalyShape::none;
  if (name == "square") return AnomalyShape::square;
  if (name == "disk") return AnomalyShape::disk;
  throw ArgumentError("unknown anomaly shape '" + name + "'");
}

namespace {

constexpr double kBaseMax = 0.6;

using Color = std::array<double, 3>;

void validate(const SyntheticSceneSpec& spec) {
  if (spec.height < ImageTensor::kMinSide || spec.width < ImageTensor::kMinSide)
    throw ArgumentError("synthetic scene sides must be at least 8");
  if (spec.anomaly_shape != AnomalyShape::none &&
      !(spec.anomaly_fraction > 0.0 && spec.anomaly_fraction <= 0.2))
    throw ArgumentError("anomaly_fraction must lie in (0, 0.2]");
}

Color base_color(Rng& rng) { return {rng.uniform(0, kBaseMax), rng.uniform(0, kBaseMax), rng.uniform(0, kBaseMax)}; }

// Draw order is fixed: base stream first, anomaly stream second, so adding an
// anomaly never perturbs the background.
Tensor render_base(const SyntheticSceneSpec& spec) {
  Rng rng(derive_seed(spec.seed, 0));
  const Color c0 = base_color(rng);
  const Color c1 = base_color(rng);
  const int h = spec.height;
  const int w = spec.width;
  Tensor t(3, h, w);

  auto blend = [&](int y, int x, double a) {
    for (int c = 0; c < 3; ++c) t.at(c, y, x) = (1.0 - a) * c0[c] + a * c1[c];
  };

  switch (spec.base_pattern) {
    case BasePattern::gradient: {
      const double theta = rng.uniform(0, 2 * std::numbers::pi);
      const double dx = std::cos(theta);
      const double dy = std::sin(theta);
      const double half = 0.5 * (std::abs(dx) * (w - 1) + std::abs(dy) * (h - 1));
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double proj = dx * (x - 0.5 * (w - 1)) + dy * (y - 0.5 * (h - 1));
          blend(y, x, half > 0 ? std::clamp(0.5 + 0.5 * proj / half, 0.0, 1.0) : 0.5);
        }
      break;
    }
    case BasePattern::stripes: {
      const double period = rng.uniform(6.0, 16.0);
      const double theta = rng.uniform(0, std::numbers::pi);
      const double phase = rng.uniform(0, 2 * std::numbers::pi);
      const double dx = std::cos(theta);
      const double dy = std::sin(theta);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          blend(y, x, 0.5 + 0.5 * std::sin(2 * std::numbers::pi * (dx * x + dy * y) / period + phase));
      break;
    }
    case BasePattern::checker: {
      const int cell = 4 + static_cast<int>(rng.below(9));
      const int ox = static_cast<int>(rng.below(cell));
      const int oy = static_cast<int>(rng.below(cell));
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) blend(y, x, (((x + ox) / cell + (y + oy) / cell) % 2) ? 1.0 : 0.0);
      break;
    }
  }
  return t;
}

std::vector<std::uint8_t> rasterize_square(int h, int w, double target, Rng& rng) {
  const int limit = std::min(h, w);
  const int a = std::max(1, static_cast<int>(std::floor(std::sqrt(target))));
  int best_h = a, best_w = a;
  double best_err = std::abs(a * a - target);
  for (auto [sh, sw] : {std::pair{a, a + 1}, std::pair{a + 1, a + 1}}) {
    const double err = std::abs(static_cast<double>(sh) * sw - target);
    if (err < best_err) best_err = err, best_h = sh, best_w = sw;
  }
  best_h = std::min(best_h, limit);
  best_w = std::min(best_w, limit);
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - best_h) + 1));
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - best_w) + 1));
  std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w, 0);
  for (int y = y0; y < y0 + best_h; ++y)
    for (int x = x0; x < x0 + best_w; ++x) m[static_cast<std::size_t>(y) * w + x] = 1;
  return m;
}

std::vector<std::uint8_t> rasterize_disk(int h, int w, double target, Rng& rng) {
  const double r_nominal = std::sqrt(target / std::numbers::pi);
  const double margin = std::min(r_nominal + 1.0, 0.5 * std::min(h, w));
  const double cy = rng.uniform(margin, h - margin);
  const double cx = rng.uniform(margin, w - margin);
  auto count = [&](double r) {
    int n = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double ddy = y + 0.5 - cy, ddx = x + 0.5 - cx;
        n += ddx * ddx + ddy * ddy <= r * r;
      }
    return n;
  };
  // pick the radius whose pixel count is closest to the target
  double best_r = 0.5;
  double best_err = std::abs(count(best_r) - target);
  for (double r = 0.5; r <= r_nominal + 2.0; r += 0.05) {
    const double err = std::abs(count(r) - target);
    if (err < best_err) best_err = err, best_r = r;
  }
  std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double ddy = y + 0.5 - cy, ddx = x + 0.5 - cx;
      m[static_cast<std::size_t>(y) * w + x] = ddx * ddx + ddy * ddy <= best_r * best_r;
    }
  return m;
}

}  // namespace

ImageTensor render_base_pattern(const SyntheticSceneSpec& spec) {
  validate(spec);
  return ImageTensor(render_base(spec), RangeTag::unit);
}

SceneRecord synthesize_scene(const SyntheticSceneSpec& spec) {
  validate(spec);
  Tensor img = render_base(spec);
  const int h = spec.height;
  const int w = spec.width;
  std::string id = spec.scene_id.empty() ? "synthetic_" + std::to_string(spec.seed) : spec.scene_id;

  if (spec.anomaly_shape == AnomalyShape::none)
    return SceneRecord(std::move(id), ImageTensor(std::move(img)), AnomalyMask::zeros(h, w));

  Rng rng(derive_seed(spec.seed, 1));
  Color color{rng.uniform(), rng.uniform(), rng.uniform()};
  color[rng.below(3)] = 1.0;
  const double target = spec.anomaly_fraction * h * w;
  std::vector<std::uint8_t> m = spec.anomaly_shape == AnomalyShape::square ? rasterize_square(h, w, target, rng)
                                                                            : rasterize_disk(h, w, target, rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (m[static_cast<std::size_t>(y) * w + x])
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
  return SceneRecord(std::move(id), ImageTensor(std::move(img)), AnomalyMask(h, w, std::move(m)));
}

ImageTensor synthesize_style_image(std::uint64_t seed, int height, int width) {
  if (height < ImageTensor::kMinSide || width < ImageTensor::kMinSide)
    throw ArgumentError("style image sides must be at least 8");
  Rng rng(derive_seed(seed, 2));
  constexpr int kWaves = 4;
  struct Wave {
    double fx, fy, phase, swirl;
  };
  Wave waves[3][kWaves];
  for (auto& channel : waves)
    for (auto& w : channel)
      w = {rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(0, 2 * std::numbers::pi), rng.uniform(0, 0.15)};
  Tensor t(3, height, width);
  const double cy = 0.5 * height, cx = 0.5 * width;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double r = std::hypot(y - cy, x - cx);
        double s = 0.0;
        for (const auto& w : waves[c]) s += std::sin(w.fx * x + w.fy * y + w.swirl * r + w.phase);
        t.at(c, y, x) = 0.5 + 0.5 * std::tanh(s);
      }
  return ImageTensor::clamped(std::move(t));
}

std::vector<SceneRecord> synthesize_dataset(int count, std::uint64_t seed, int height, int width,
                                            double eval_fraction) {
  if (count < 1) throw ArgumentError("scene count must be positive");
  if (!(eval_fraction >= 0.0 && eval_fraction <= 1.0)) throw ArgumentError("eval_fraction must be in [0, 1]");
  const int n_eval = static_cast<int>(std::lround(count * eval_fraction));
  static constexpr BasePattern patterns[] = {BasePattern::gradient, BasePattern::stripes, BasePattern::checker};
  std::vector<SceneRecord> out;
  out.reserve(count);
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "synthetic_%03d", i);
    SyntheticSceneSpec spec;
    spec.base_pattern = patterns[i % 3];
    spec.anomaly_shape = (i / 3) % 2 ? AnomalyShape::disk : AnomalyShape::square;
    spec.anomaly_fraction = rng.uniform(0.03, 0.1);
    spec.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    spec.height = height;
    spec.width = width;
    spec.scene_id = id;
    SceneRecord r = synthesize_scene(spec);
    r.split = i >= count - n_eval ? SplitTag::eval : SplitTag::train;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fbst
