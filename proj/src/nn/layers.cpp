#include "fbst/nn/layers.hpp"

#include "fbst/errors.hpp"
#include "fbst/util/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fbst {

std::vector<double>& GradBuffer::of(const Param& p) {
  auto& g = grads_[&p];
  if (g.size() != p.value.size()) g.assign(p.value.size(), 0.0);
  return g;
}

const std::vector<double>* GradBuffer::find(const Param& p) const {
  auto it = grads_.find(&p);
  return it == grads_.end() ? nullptr : &it->second;
}

void GradBuffer::zero() {
  for (auto& [p, g] : grads_) std::fill(g.begin(), g.end(), 0.0);
}

bool GradBuffer::all_finite() const {
  for (const auto& [p, g] : grads_)
    for (double v : g)
      if (!std::isfinite(v)) return false;
  return true;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(ConvSpec spec) : spec_(spec) {
  if (spec.in_channels <= 0 || spec.out_channels <= 0 || spec.kernel <= 0 || spec.stride <= 0 ||
      spec.padding < 0)
    throw ArgumentError("invalid convolution spec");
  weight_.name = "weight";
  weight_.value.assign(static_cast<std::size_t>(spec.out_channels) * spec.in_channels * spec.kernel * spec.kernel,
                       0.0);
  bias_.name = "bias";
  if (spec.bias) bias_.value.assign(spec.out_channels, 0.0);
}

Shape Conv2d::output_shape(const Shape& in) const {
  if (in.channels != spec_.in_channels)
    throw ArgumentError("conv2d expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                        std::to_string(in.channels));
  const int oh = (in.height + 2 * spec_.padding - spec_.kernel) / spec_.stride + 1;
  const int ow = (in.width + 2 * spec_.padding - spec_.kernel) / spec_.stride + 1;
  if (oh <= 0 || ow <= 0) throw ArgumentError("conv2d input too small");
  if (spec_.pad_mode == PadMode::reflect && (spec_.padding >= in.height || spec_.padding >= in.width))
    throw ArgumentError("reflection padding must be smaller than the input");
  return {spec_.out_channels, oh, ow};
}

namespace {

// Source index along one axis for every (kernel tap, output position); -1 is zero padding.
std::vector<int> tap_table(int in, int out, int k, int stride, int pad, PadMode mode) {
  std::vector<int> t(static_cast<std::size_t>(k) * out);
  for (int kk = 0; kk < k; ++kk)
    for (int o = 0; o < out; ++o) {
      int i = o * stride - pad + kk;
      if (i < 0 || i >= in) {
        if (mode == PadMode::zero)
          i = -1;
        else
          i = i < 0 ? -i : 2 * (in - 1) - i;
      }
      t[static_cast<std::size_t>(kk) * out + o] = i;
    }
  return t;
}

}  // namespace

RowMatrix Conv2d::im2col(const Tensor& x, int oh, int ow) const {
  const int k = spec_.kernel;
  const auto ys = tap_table(x.height(), oh, k, spec_.stride, spec_.padding, spec_.pad_mode);
  const auto xs = tap_table(x.width(), ow, k, spec_.stride, spec_.padding, spec_.pad_mode);
  RowMatrix cols(static_cast<Eigen::Index>(spec_.in_channels) * k * k, static_cast<Eigen::Index>(oh) * ow);
  const std::size_t w = static_cast<std::size_t>(x.width());
  for (int c = 0; c < spec_.in_channels; ++c) {
    const double* plane = x.plane(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* dst = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        const int* xt = xs.data() + static_cast<std::size_t>(kx) * ow;
        for (int oy = 0; oy < oh; ++oy, dst += ow) {
          const int iy = ys[static_cast<std::size_t>(ky) * oh + oy];
          if (iy < 0) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) dst[ox] = xt[ox] < 0 ? 0.0 : src[xt[ox]];
        }
      }
  }
  return cols;
}

// Channel planes with the padding materialized; stride-1 only.
Tensor Conv2d::padded(const Tensor& x, int oh, int ow) const {
  const int k = spec_.kernel;
  const auto ys = tap_table(x.height(), oh + k - 1, 1, 1, spec_.padding, spec_.pad_mode);
  const auto xs = tap_table(x.width(), ow + k - 1, 1, 1, spec_.padding, spec_.pad_mode);
  Tensor p(x.channels(), oh + k - 1, ow + k - 1);
  for (int c = 0; c < x.channels(); ++c)
    for (int r = 0; r < p.height(); ++r)
      if (ys[r] >= 0)
        for (int q = 0; q < p.width(); ++q) p.at(c, r, q) = xs[q] < 0 ? 0.0 : x.at(c, ys[r], xs[q]);
  return p;
}

Tensor Conv2d::forward(const Tensor& x) const {
  const Shape os = output_shape(x.shape());
  if (direct()) {
    const int k = spec_.kernel, oh = os.height, ow = os.width;
    const Tensor p = padded(x, oh, ow);
    Tensor y(os);
    for (int o = 0; o < os.channels; ++o) y.matrix().row(o).setConstant(spec_.bias ? bias_.value[o] : 0.0);
    for (int c = 0; c < spec_.in_channels; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
          for (int o = 0; o < os.channels; ++o) {
            const double wv = weight_.value[((static_cast<std::size_t>(o) * spec_.in_channels + c) * k + ky) * k + kx];
            for (int oy = 0; oy < oh; ++oy) {
              const double* src = p.plane(c).data() + static_cast<std::size_t>(oy + ky) * p.width() + kx;
              double* dst = &y.at(o, oy, 0);
              for (int ox = 0; ox < ow; ++ox) dst[ox] += wv * src[ox];
            }
          }
    return y;
  }
  const RowMatrix cols = im2col(x, os.height, os.width);
  ConstMatrixMap w(weight_.value.data(), spec_.out_channels, cols.rows());
  Tensor y(os);
  auto ym = y.matrix();
  ym.noalias() = w * cols;
  if (spec_.bias)
    for (int o = 0; o < spec_.out_channels; ++o) ym.row(o).array() += bias_.value[o];
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& /*y*/, const Tensor& dy, GradBuffer* grads) const {
  const Shape os = output_shape(x.shape());
  if (!(dy.shape() == os)) throw ArgumentError("conv2d backward: gradient shape mismatch");
  const int k = spec_.kernel;
  if (direct()) return backward_direct(x, dy, grads);
  const RowMatrix cols = im2col(x, os.height, os.width);
  ConstMatrixMap w(weight_.value.data(), spec_.out_channels, cols.rows());
  const auto dym = dy.matrix();

  if (grads) {
    auto& gw = grads->of(weight_);
    MatrixMap gwm(gw.data(), spec_.out_channels, cols.rows());
    gwm.noalias() += dym * cols.transpose();
    if (spec_.bias) {
      auto& gb = grads->of(bias_);
      // plain sequential sums: Eigen's vectorized reduction order depends on the buffer address
      for (int o = 0; o < spec_.out_channels; ++o) gb[o] += std::accumulate(dy.plane(o).begin(), dy.plane(o).end(), 0.0);
    }
  }

  const RowMatrix dcols = w.transpose() * dym;
  const auto ys = tap_table(x.height(), os.height, k, spec_.stride, spec_.padding, spec_.pad_mode);
  const auto xs = tap_table(x.width(), os.width, k, spec_.stride, spec_.padding, spec_.pad_mode);
  Tensor dx(x.shape());
  const std::size_t xw = static_cast<std::size_t>(x.width());
  for (int c = 0; c < spec_.in_channels; ++c) {
    double* plane = dx.plane(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* src = dcols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        const int* xt = xs.data() + static_cast<std::size_t>(kx) * os.width;
        for (int oy = 0; oy < os.height; ++oy, src += os.width) {
          const int iy = ys[static_cast<std::size_t>(ky) * os.height + oy];
          if (iy < 0) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * xw;
          for (int ox = 0; ox < os.width; ++ox)
            if (xt[ox] >= 0) dst[xt[ox]] += src[ox];
        }
      }
  }
  return dx;
}

Tensor Conv2d::backward_direct(const Tensor& x, const Tensor& dy, GradBuffer* grads) const {
  const int k = spec_.kernel, oh = dy.height(), ow = dy.width();
  const Tensor p = padded(x, oh, ow);
  Tensor dp(p.shape());
  std::vector<double>* gw = grads ? &grads->of(weight_) : nullptr;
  for (int c = 0; c < spec_.in_channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx)
        for (int o = 0; o < dy.channels(); ++o) {
          const std::size_t wi = ((static_cast<std::size_t>(o) * spec_.in_channels + c) * k + ky) * k + kx;
          const double wv = weight_.value[wi];
          double acc = 0.0;
          for (int oy = 0; oy < oh; ++oy) {
            const double* g = dy.plane(o).data() + static_cast<std::size_t>(oy) * ow;
            const double* src = p.plane(c).data() + static_cast<std::size_t>(oy + ky) * p.width() + kx;
            double* dst = &dp.at(c, oy + ky, kx);
            for (int ox = 0; ox < ow; ++ox) {
              acc += g[ox] * src[ox];
              dst[ox] += wv * g[ox];
            }
          }
          if (gw) (*gw)[wi] += acc;
        }
  if (grads && spec_.bias) {
    auto& gb = grads->of(bias_);
    for (int o = 0; o < dy.channels(); ++o) gb[o] += std::accumulate(dy.plane(o).begin(), dy.plane(o).end(), 0.0);
  }
  // fold the padded gradient back onto its source pixels
  const auto ys = tap_table(x.height(), p.height(), 1, 1, spec_.padding, spec_.pad_mode);
  const auto xs = tap_table(x.width(), p.width(), 1, 1, spec_.padding, spec_.pad_mode);
  Tensor dx(x.shape());
  for (int c = 0; c < x.channels(); ++c)
    for (int r = 0; r < p.height(); ++r)
      if (ys[r] >= 0)
        for (int q = 0; q < p.width(); ++q)
          if (xs[q] >= 0) dx.at(c, ys[r], xs[q]) += dp.at(c, r, q);
  return dx;
}

std::vector<Param*> Conv2d::params() {
  if (spec_.bias) return {&weight_, &bias_};
  return {&weight_};
}

// ---------------------------------------------------------- InstanceNorm

Tensor InstanceNorm::forward(const Tensor& x) const {
  Tensor y(x.shape());
  const double n = static_cast<double>(x.height()) * x.width();
  for (int c = 0; c < x.channels(); ++c) {
    const auto in = x.plane(c);
    auto out = y.plane(c);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps_);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - mean) * inv;
  }
  return y;
}

Tensor InstanceNorm::backward(const Tensor& x, const Tensor& y, const Tensor& dy, GradBuffer*) const {
  Tensor dx(x.shape());
  const double n = static_cast<double>(x.height()) * x.width();
  for (int c = 0; c < x.channels(); ++c) {
    const auto in = x.plane(c);
    const auto yh = y.plane(c);
    const auto g = dy.plane(c);
    auto out = dx.plane(c);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps_);
    double g_mean = 0.0, gy_mean = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      g_mean += g[i];
      gy_mean += g[i] * yh[i];
    }
    g_mean /= n;
    gy_mean /= n;
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = inv * (g[i] - g_mean - yh[i] * gy_mean);
  }
  return dx;
}

// ------------------------------------------------------------ Activation

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "leaky_relu") return Activation::leaky_relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus" || name == "smooth") return Activation::softplus;
  throw ArgumentError("unknown activation '" + name + "'");
}

Tensor ActivationLayer::forward(const Tensor& x) const {
  Tensor y = x;
  switch (act_) {
    case Activation::identity:
      break;
    case Activation::relu:
      for (double& v : y.values()) v = v > 0 ? v : 0.0;
      break;
    case Activation::leaky_relu:
      for (double& v : y.values()) v = v > 0 ? v : slope_ * v;
      break;
    case Activation::tanh:
      for (double& v : y.values()) v = std::tanh(v);
      break;
    case Activation::softplus:
      // log(1 + e^v) without overflow
      for (double& v : y.values()) v = v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
      break;
  }
  return y;
}

Tensor ActivationLayer::backward(const Tensor& x, const Tensor& y, const Tensor& dy, GradBuffer*) const {
  Tensor dx = dy;
  auto d = dx.values();
  const auto xv = x.values();
  const auto yv = y.values();
  switch (act_) {
    case Activation::identity:
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = xv[i] > 0 ? d[i] : 0.0;
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = xv[i] > 0 ? d[i] : slope_ * d[i];
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - yv[i] * yv[i];
      break;
    case Activation::softplus:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 / (1.0 + std::exp(-xv[i]));
      break;
  }
  return dx;
}

// --------------------------------------------------------------- MaxPool2

Shape MaxPool2::output_shape(const Shape& in) const {
  if (in.height < 2 || in.width < 2) throw ArgumentError("max pool input smaller than 2x2");
  return {in.channels, in.height / 2, in.width / 2};
}

Tensor MaxPool2::forward(const Tensor& x) const {
  Tensor y(output_shape(x.shape()));
  for (int c = 0; c < y.channels(); ++c)
    for (int oy = 0; oy < y.height(); ++oy)
      for (int ox = 0; ox < y.width(); ++ox)
        y.at(c, oy, ox) = std::max({x.at(c, 2 * oy, 2 * ox), x.at(c, 2 * oy, 2 * ox + 1),
                                    x.at(c, 2 * oy + 1, 2 * ox), x.at(c, 2 * oy + 1, 2 * ox + 1)});
  return y;
}

Tensor MaxPool2::backward(const Tensor& x, const Tensor&, const Tensor& dy, GradBuffer*) const {
  Tensor dx(x.shape());
  for (int c = 0; c < dy.channels(); ++c)
    for (int oy = 0; oy < dy.height(); ++oy)
      for (int ox = 0; ox < dy.width(); ++ox) {
        int by = 2 * oy, bx = 2 * ox;
        for (int dyy = 0; dyy < 2; ++dyy)
          for (int dxx = 0; dxx < 2; ++dxx)
            if (x.at(c, 2 * oy + dyy, 2 * ox + dxx) > x.at(c, by, bx)) by = 2 * oy + dyy, bx = 2 * ox + dxx;
        dx.at(c, by, bx) += dy.at(c, oy, ox);
      }
  return dx;
}

// -------------------------------------------------------------- Upsample2

Shape Upsample2::output_shape(const Shape& in) const { return {in.channels, 2 * in.height, 2 * in.width}; }

Tensor Upsample2::forward(const Tensor& x) const {
  Tensor y(output_shape(x.shape()));
  for (int c = 0; c < y.channels(); ++c)
    for (int yy = 0; yy < y.height(); ++yy)
      for (int xx = 0; xx < y.width(); ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
  return y;
}

Tensor Upsample2::backward(const Tensor& x, const Tensor&, const Tensor& dy, GradBuffer*) const {
  Tensor dx(x.shape());
  for (int c = 0; c < dy.channels(); ++c)
    for (int yy = 0; yy < dy.height(); ++yy)
      for (int xx = 0; xx < dy.width(); ++xx) dx.at(c, yy / 2, xx / 2) += dy.at(c, yy, xx);
  return dx;
}

// -------------------------------------------------------- ChannelNormalize

ChannelNormalize::ChannelNormalize(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), std_(std::move(stddev)) {
  if (mean_.size() != std_.size()) throw ArgumentError("normalization mean/std length mismatch");
  for (std::size_t i = 0; i < mean_.size(); ++i)
    if (!std::isfinite(mean_[i]) || !std::isfinite(std_[i]) || std_[i] <= 0)
      throw ArgumentError("normalization statistics must be finite with positive std");
}

Tensor ChannelNormalize::forward(const Tensor& x) const {
  if (static_cast<std::size_t>(x.channels()) != mean_.size())
    throw ArgumentError("normalization channel count mismatch");
  Tensor y = x;
  for (int c = 0; c < x.channels(); ++c)
    for (double& v : y.plane(c)) v = (v - mean_[c]) / std_[c];
  return y;
}

Tensor ChannelNormalize::backward(const Tensor& x, const Tensor&, const Tensor& dy, GradBuffer*) const {
  Tensor dx = dy;
  for (int c = 0; c < x.channels(); ++c)
    for (double& v : dx.plane(c)) v /= std_[c];
  return dx;
}

// ------------------------------------------------------------- Sequential

Layer& Sequential::add(std::unique_ptr<Layer> layer) {
  steps_.push_back({std::move(layer), -1});
  return *steps_.back().layer;
}

void Sequential::add_residual(int from_activation) {
  if (from_activation < 0 || from_activation > size())
    throw ArgumentError("residual source must be an existing activation");
  steps_.push_back({nullptr, from_activation});
}

Shape Sequential::output_shape(const Shape& in) const {
  std::vector<Shape> shapes{in};
  for (const auto& s : steps_) {
    if (s.layer) {
      shapes.push_back(s.layer->output_shape(shapes.back()));
    } else {
      if (!(shapes[s.residual_from] == shapes.back())) throw ArgumentError("residual shape mismatch");
      shapes.push_back(shapes.back());
    }
  }
  return shapes.back();
}

std::vector<Tensor> Sequential::forward_trace(const Tensor& x) const {
  std::vector<Tensor> acts;
  acts.reserve(steps_.size() + 1);
  acts.push_back(x);
  for (const auto& s : steps_) {
    if (s.layer) {
      acts.push_back(s.layer->forward(acts.back()));
    } else {
      Tensor y = acts.back();
      y += acts[s.residual_from];
      acts.push_back(std::move(y));
    }
  }
  return acts;
}

Tensor Sequential::forward(const Tensor& x) const {
  // keeps only what residual steps still need
  std::vector<int> last_use(steps_.size() + 1, -1);
  for (int i = 0; i < size(); ++i)
    if (steps_[i].residual_from >= 0) last_use[steps_[i].residual_from] = i;
  std::unordered_map<int, Tensor> saved;
  Tensor cur = x;
  for (int i = 0; i < size(); ++i) {
    if (last_use[i] >= i) saved.emplace(i, cur);
    const auto& s = steps_[i];
    if (s.layer) {
      cur = s.layer->forward(cur);
    } else {
      cur += saved.at(s.residual_from);
      if (last_use[s.residual_from] == i) saved.erase(s.residual_from);
    }
  }
  return cur;
}

Tensor Sequential::backward(const std::vector<Tensor>& acts, std::vector<Tensor> g, GradBuffer* grads) const {
  if (acts.size() != steps_.size() + 1) throw ArgumentError("activation trace does not match network");
  g.resize(acts.size());
  for (int i = size() - 1; i >= 0; --i) {
    if (g[i + 1].empty()) continue;
    const auto& s = steps_[i];
    Tensor dx;
    if (s.layer) {
      dx = s.layer->backward(acts[i], acts[i + 1], g[i + 1], grads);
    } else {
      dx = g[i + 1];
      if (g[s.residual_from].empty())
        g[s.residual_from] = g[i + 1];
      else
        g[s.residual_from] += g[i + 1];
    }
    if (g[i].empty())
      g[i] = std::move(dx);
    else
      g[i] += dx;
    g[i + 1] = Tensor();
  }
  return g[0].empty() ? Tensor(acts[0].shape()) : std::move(g[0]);
}

Tensor Sequential::backward(const std::vector<Tensor>& acts, const Tensor& dy, GradBuffer* grads) const {
  std::vector<Tensor> g(acts.size());
  g.back() = dy;
  return backward(acts, std::move(g), grads);
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& s : steps_)
    if (s.layer)
      for (Param* p : s.layer->params()) out.push_back(p);
  return out;
}

std::vector<const Param*> Sequential::params() const {
  std::vector<const Param*> out;
  for (const auto& s : steps_)
    if (s.layer)
      for (Param* p : s.layer->params()) out.push_back(p);
  return out;
}

std::size_t Sequential::parameter_count() const {
  std::size_t n = 0;
  for (const Param* p : params()) n += p->value.size();
  return n;
}

void init_normal(Param& p, Rng& rng, double stddev) {
  for (double& v : p.value) v = rng.normal(0.0, stddev);
}

// ------------------------------------------------------------------- Adam

void Adam::step(const std::vector<Param*>& params, const GradBuffer& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Param* p : params) {
    const auto* g = grads.find(*p);
    if (!g) continue;
    auto& st = state_[p];
    if (st.m.size() != p->value.size()) {
      st.m.assign(p->value.size(), 0.0);
      st.v.assign(p->value.size(), 0.0);
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double gi = (*g)[i];
      st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
      st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
      p->value[i] -= cfg_.learning_rate * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg_.eps);
    }
  }
}

}  // namespace fbst
