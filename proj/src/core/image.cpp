#include "fbst/core/image.hpp"

#include "fbst/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fbst {

namespace {

double range_lo(RangeTag r) { return r == RangeTag::unit ? 0.0 : -1.0; }

}  // namespace

const char* to_string(RangeTag r) { return r == RangeTag::unit ? "unit" : "signed"; }

ImageTensor::ImageTensor(Tensor values, RangeTag range) : values_(std::move(values)), range_(range) {
  if (values_.channels() != 1 && values_.channels() != 3)
    throw ArgumentError("image must have 1 or 3 channels");
  if (values_.height() < kMinSide || values_.width() < kMinSide)
    throw ArgumentError("image sides must be at least 8 pixels");
  const double lo = range_lo(range_);
  for (double v : values_.values()) {
    if (!(v >= lo && v <= 1.0))
      throw ArgumentError(std::string("image value outside ") + to_string(range_) + " range");
  }
}

ImageTensor ImageTensor::clamped(Tensor values, RangeTag range) {
  const double lo = range_lo(range);
  for (double& v : values.values()) {
    if (std::isnan(v)) throw NumericError("NaN in image values");
    v = std::clamp(v, lo, 1.0);
  }
  return ImageTensor(std::move(values), range);
}

ImageTensor ImageTensor::filled(int channels, int height, int width, double value, RangeTag range) {
  return ImageTensor(Tensor(channels, height, width, value), range);
}

ImageTensor ImageTensor::to_signed() const {
  if (range_ == RangeTag::signed_unit) return *this;
  Tensor t = values_;
  for (double& v : t.values()) v = 2.0 * v - 1.0;
  return clamped(std::move(t), RangeTag::signed_unit);
}

ImageTensor ImageTensor::to_unit() const {
  if (range_ == RangeTag::unit) return *this;
  Tensor t = values_;
  for (double& v : t.values()) v = 0.5 * (v + 1.0);
  return clamped(std::move(t), RangeTag::unit);
}

ImageTensor ImageTensor::with_range(RangeTag range) const {
  return range == RangeTag::unit ? to_unit() : to_signed();
}

AnomalyMask::AnomalyMask(int height, int width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height <= 0 || width <= 0) throw ArgumentError("mask dimensions must be positive");
  if (values_.size() != static_cast<std::size_t>(height) * width)
    throw ArgumentError("mask value count does not match dimensions");
  if (std::any_of(values_.begin(), values_.end(), [](std::uint8_t v) { return v > 1; }))
    throw ArgumentError("mask values must be 0 or 1");
}

AnomalyMask AnomalyMask::zeros(int height, int width) {
  return AnomalyMask(height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0));
}

std::size_t AnomalyMask::count() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

double AnomalyMask::fraction() const {
  return static_cast<double>(count()) / static_cast<double>(values_.size());
}

bool AnomalyMask::has_both_classes() const {
  const auto n = count();
  return n > 0 && n < values_.size();
}

SceneRecord::SceneRecord(std::string id, ImageTensor img, std::optional<AnomalyMask> m, SplitTag s)
    : scene_id(std::move(id)), image(std::move(img)), mask(std::move(m)), split(s) {
  if (mask && (mask->height() != image.height() || mask->width() != image.width()))
    throw ArgumentError("scene " + scene_id + ": mask dimensions differ from image dimensions");
}

Tensor resize_bilinear(const Tensor& src, int new_h, int new_w) {
  if (new_h <= 0 || new_w <= 0) throw ArgumentError("resize target must be positive");
  const int h = src.height();
  const int w = src.width();
  if (new_h == h && new_w == w) return src;

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double s = (o + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, s - i0};
    }
    return t;
  };
  const auto ty = taps(h, new_h);
  const auto tx = taps(w, new_w);

  Tensor out(src.channels(), new_h, new_w);
  for (int c = 0; c < src.channels(); ++c) {
    for (int y = 0; y < new_h; ++y) {
      const auto& a = ty[y];
      for (int x = 0; x < new_w; ++x) {
        const auto& b = tx[x];
        const double top = src.at(c, a.i0, b.i0) * (1.0 - b.f) + src.at(c, a.i0, b.i1) * b.f;
        const double bot = src.at(c, a.i1, b.i0) * (1.0 - b.f) + src.at(c, a.i1, b.i1) * b.f;
        out.at(c, y, x) = top * (1.0 - a.f) + bot * a.f;
      }
    }
  }
  return out;
}

ImageTensor resize(const ImageTensor& image, int new_h, int new_w) {
  if (new_h <= 0 || new_w <= 0) throw ArgumentError("resize target must be positive");
  if (new_h < ImageTensor::kMinSide || new_w < ImageTensor::kMinSide)
    throw ArgumentError("resize target sides must be at least 8");
  // convex combinations stay in range up to rounding; clamp absorbs the last ulp
  return ImageTensor::clamped(resize_bilinear(image.tensor(), new_h, new_w), image.range());
}

}  // namespace fbst
