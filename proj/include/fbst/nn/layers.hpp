#pragma once

#include "fbst/nn/tensor.hpp"

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace fbst {

class Rng;

struct Param {
  std::string name;
  std::vector<double> value;
};

// Gradient storage keyed by parameter; kept outside the layers so that
// forward/backward stay const and a network can be shared read-only.
class GradBuffer {
 public:
  std::vector<double>& of(const Param& p);
  const std::vector<double>* find(const Param& p) const;
  void zero();
  bool all_finite() const;

 private:
  std::unordered_map<const Param*, std::vector<double>> grads_;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor forward(const Tensor& x) const = 0;
  // y == forward(x). Parameter gradients are accumulated into `grads` when
  // it is non-null. Returns dL/dx.
  virtual Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, GradBuffer* grads) const = 0;
  virtual std::vector<Param*> params() { return {}; }
};

enum class PadMode { zero, reflect };

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  PadMode pad_mode = PadMode::zero;
  bool bias = true;
};

class Conv2d final : public Layer {
 public:
  explicit Conv2d(ConvSpec spec);

  std::string kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, GradBuffer* grads) const override;
  std::vector<Param*> params() override;

  const ConvSpec& spec() const { return spec_; }
  Param& weight() { return weight_; }  // out x (in*k*k), row-major
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }

 private:
  RowMatrix im2col(const Tensor& x, int out_h, int out_w) const;
  // narrow stride-1 convolutions skip im2col
  bool direct() const { return spec_.stride == 1 && spec_.out_channels <= 4; }
  Tensor padded(const Tensor& x, int out_h, int out_w) const;
  Tensor backward_direct(const Tensor& x, const Tensor& dy, GradBuffer* grads) const;

  ConvSpec spec_;
  Param weight_;
  Param bias_;
};

class InstanceNorm final : public Layer {
 public:
  explicit InstanceNorm(double eps = 1e-5) : eps_(eps) {}
  std::string kind() const override { return "instance_norm"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, GradBuffer* grads) const override;

 private:
  double eps_;
};

enum class Activation { identity, relu, leaky_relu, tanh, softplus };

Activation parse_activation(const std::string& name);

class ActivationLayer final : public Layer {
 public:
  explicit ActivationLayer(Activation a, double negative_slope = 0.2) : act_(a), slope_(negative_slope) {}
  std::string kind() const override { return "activation"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, GradBuffer* grads) const override;
  Activation activation() const { return act_; }

 private:
  Activation act_;
  double slope_;
};

// 2x2 window, stride 2; odd trailing rows/columns are dropped.
class MaxPool2 final : public Layer {
 public:
  std::string kind() const override { return "max_pool"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, GradBuffer* grads) const override;
};

// Nearest-neighbour 2x upsampling.
class Upsample2 final : public Layer {
 public:
  std::string kind() const override { return "upsample"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, GradBuffer* grads) const override;
};

// Fixed per-channel (x - mean) / std.
class ChannelNormalize final : public Layer {
 public:
  ChannelNormalize(std::vector<double> mean, std::vector<double> stddev);
  std::string kind() const override { return "normalize"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& dy, GradBuffer* grads) const override;

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

// Layer chain with optional residual steps. Activation i is the input of
// step i (activation 0 is the network input, activation size() the output).
// A residual step adds an earlier activation to its input.
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  Layer& add(std::unique_ptr<Layer> layer);
  void add_residual(int from_activation);
  int size() const { return static_cast<int>(steps_.size()); }
  const Layer* layer(int step) const { return steps_[step].layer.get(); }

  Shape output_shape(const Shape& in) const;
  Tensor forward(const Tensor& x) const;
  std::vector<Tensor> forward_trace(const Tensor& x) const;

  // Backpropagates seeded activation gradients down to the input.
  Tensor backward(const std::vector<Tensor>& acts, std::vector<Tensor> act_grads, GradBuffer* grads) const;
  Tensor backward(const std::vector<Tensor>& acts, const Tensor& dy, GradBuffer* grads) const;

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  std::size_t parameter_count() const;

 private:
  struct Step {
    std::unique_ptr<Layer> layer;  // null for residual steps
    int residual_from = -1;
  };
  std::vector<Step> steps_;
};

void init_normal(Param& p, Rng& rng, double stddev);

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  // One update of every parameter that has a gradient in `grads`.
  void step(const std::vector<Param*>& params, const GradBuffer& grads);
  long steps_taken() const { return t_; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  long t_ = 0;
  std::unordered_map<const Param*, Moments> state_;
};

}  // namespace fbst
