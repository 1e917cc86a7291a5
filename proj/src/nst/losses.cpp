#include "fbst/nst/losses.hpp"

#include "fbst/errors.hpp"

#include <cmath>

namespace fbst {

Eigen::MatrixXd gram_matrix(const Tensor& features) {
  if (features.empty()) throw ArgumentError("gram_matrix of an empty tensor");
  if (!features.all_finite()) throw NumericError("gram_matrix input contains non-finite values");
  const auto f = features.matrix();
  const double norm = static_cast<double>(features.size());
  Eigen::MatrixXd g = (f * f.transpose()) / norm;
  g.triangularView<Eigen::StrictlyLower>() = g.transpose();
  return g;
}

Tensor gram_backward(const Tensor& features, const Eigen::MatrixXd& grad_gram) {
  const int c = features.channels();
  if (grad_gram.rows() != c || grad_gram.cols() != c) throw ArgumentError("gram gradient shape mismatch");
  Tensor out(features.shape());
  // dG_ij/dF = (F_j e_i + F_i e_j) / N  ->  dL/dF = (D + D^T) F / N
  out.matrix().noalias() = ((grad_gram + grad_gram.transpose()) * features.matrix()) / static_cast<double>(features.size());
  return out;
}

double content_loss(const FeatureBundle& generated, const FeatureBundle& content,
                    const std::vector<std::string>& layers) {
  if (layers.empty()) throw ArgumentError("content_loss needs at least one layer");
  double total = 0.0;
  for (const auto& name : layers) {
    const Tensor& a = generated.at(name);
    const Tensor& b = content.at(name);
    if (!(a.shape() == b.shape())) throw ArgumentError("content_loss shape mismatch at layer " + name);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    total += s / static_cast<double>(a.size());
  }
  return total / static_cast<double>(layers.size());
}

std::map<std::string, double> style_layer_losses(const FeatureBundle& generated, const GramMap& style_grams,
                                                 const std::vector<std::string>& layers) {
  std::map<std::string, double> out;
  for (const auto& name : layers) {
    auto it = style_grams.find(name);
    if (it == style_grams.end()) throw ArgumentError("no style Gram matrix for layer " + name);
    const Eigen::MatrixXd g = gram_matrix(generated.at(name));
    if (g.rows() != it->second.rows() || g.cols() != it->second.cols())
      throw ArgumentError("style Gram shape mismatch at layer " + name);
    out[name] = (g - it->second).squaredNorm() / static_cast<double>(g.size());
  }
  return out;
}

double style_loss(const FeatureBundle& generated, const GramMap& style_grams, const LayerWeights& layer_weights) {
  double wsum = 0.0;
  std::vector<std::string> layers;
  for (const auto& [name, w] : layer_weights) {
    if (!(w >= 0.0)) throw ArgumentError("style layer weights must be nonnegative");
    wsum += w;
    layers.push_back(name);
  }
  if (std::abs(wsum - 1.0) > 1e-6) throw ArgumentError("style layer weights must sum to 1");
  const auto per_layer = style_layer_losses(generated, style_grams, layers);
  double total = 0.0;
  for (const auto& [name, w] : layer_weights) total += w * per_layer.at(name);
  return total;
}

GramMap style_grams(const FeatureBundle& style_features, const std::vector<std::string>& layers) {
  GramMap out;
  for (const auto& name : layers) out[name] = gram_matrix(style_features.at(name));
  return out;
}

LayerWeights uniform_layer_weights(const std::vector<std::string>& layers) {
  if (layers.empty()) throw ArgumentError("no style layers");
  LayerWeights w;
  for (const auto& l : layers) w[l] = 1.0 / static_cast<double>(layers.size());
  return w;
}

}  // namespace fbst
