#pragma once

#include "fbst/nn/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fbst {

enum class RangeTag { unit, signed_unit };  // [0,1] and [-1,1]

const char* to_string(RangeTag r);

// Image flowing through the transfers. Immutable after construction; the
// constructor checks channels in {1,3}, both sides >= 8 and the value range.
class ImageTensor {
 public:
  static constexpr int kMinSide = 8;

  ImageTensor(Tensor values, RangeTag range = RangeTag::unit);
  // Clamps into the declared range instead of rejecting out-of-range values.
  static ImageTensor clamped(Tensor values, RangeTag range = RangeTag::unit);
  static ImageTensor filled(int channels, int height, int width, double value,
                            RangeTag range = RangeTag::unit);

  const Tensor& tensor() const { return values_; }
  RangeTag range() const { return range_; }
  int channels() const { return values_.channels(); }
  int height() const { return values_.height(); }
  int width() const { return values_.width(); }
  double at(int c, int y, int x) const { return values_.at(c, y, x); }

  // unit <-> signed; x -> 2x - 1 and its inverse
  ImageTensor to_signed() const;
  ImageTensor to_unit() const;
  ImageTensor with_range(RangeTag range) const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  Tensor values_;
  RangeTag range_;
};

class AnomalyMask {
 public:
  AnomalyMask(int height, int width, std::vector<std::uint8_t> values);
  static AnomalyMask zeros(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  std::uint8_t at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<std::uint8_t>& values() const { return values_; }
  std::size_t count() const;
  double fraction() const;
  bool has_both_classes() const;

  friend bool operator==(const AnomalyMask&, const AnomalyMask&) = default;

 private:
  int height_;
  int width_;
  std::vector<std::uint8_t> values_;
};

enum class SplitTag { train, eval };

struct SceneRecord {
  std::string scene_id;
  ImageTensor image;
  std::optional<AnomalyMask> mask;
  SplitTag split = SplitTag::eval;

  SceneRecord(std::string id, ImageTensor img, std::optional<AnomalyMask> m = std::nullopt,
              SplitTag s = SplitTag::eval);
};

// Bilinear resampling with half-pixel centres on a raw tensor (no size floor).
Tensor resize_bilinear(const Tensor& src, int new_h, int new_w);
ImageTensor resize(const ImageTensor& image, int new_h, int new_w);

}  // namespace fbst
