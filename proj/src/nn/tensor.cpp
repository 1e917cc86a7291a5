#include "fbst/nn/tensor.hpp"

#include "fbst/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fbst {

Tensor::Tensor(int channels, int height, int width, double fill)
    : shape_{channels, height, width} {
  if (channels <= 0 || height <= 0 || width <= 0)
    throw ArgumentError("tensor dimensions must be positive");
  data_.assign(shape_.size(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0)
    throw ArgumentError("tensor dimensions must be positive");
  if (data_.size() != shape_.size()) throw ArgumentError("tensor value count does not match shape");
}

std::span<double> Tensor::plane(int c) {
  const std::size_t n = static_cast<std::size_t>(shape_.height) * shape_.width;
  return std::span<double>(data_).subspan(c * n, n);
}

std::span<const double> Tensor::plane(int c) const {
  const std::size_t n = static_cast<std::size_t>(shape_.height) * shape_.width;
  return std::span<const double>(data_).subspan(c * n, n);
}

MatrixMap Tensor::matrix() {
  return MatrixMap(data_.data(), shape_.channels,
                   static_cast<Eigen::Index>(shape_.height) * shape_.width);
}

ConstMatrixMap Tensor::matrix() const {
  return ConstMatrixMap(data_.data(), shape_.channels,
                        static_cast<Eigen::Index>(shape_.height) * shape_.width);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!(shape_ == other.shape_)) throw ArgumentError("tensor shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) throw ArgumentError("tensor shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace fbst
