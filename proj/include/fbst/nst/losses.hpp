#pragma once

#include "fbst/features/extractor.hpp"

#include <Eigen/Core>

#include <map>
#include <string>
#include <vector>

namespace fbst {

using GramMap = std::map<std::string, Eigen::MatrixXd>;
using LayerWeights = std::map<std::string, double>;

// G = F F^T / (C*H*W) with F the C x (H*W) feature matrix. Exactly symmetric.
Eigen::MatrixXd gram_matrix(const Tensor& features);

// dL/dF for L = f(G) given dL/dG (assumed symmetric).
Tensor gram_backward(const Tensor& features, const Eigen::MatrixXd& grad_gram);

// Mean over `layers` of the per-layer mean squared feature difference.
double content_loss(const FeatureBundle& generated, const FeatureBundle& content,
                    const std::vector<std::string>& layers);

// Per-layer MSE between the generated Gram matrix and the style Gram matrix.
std::map<std::string, double> style_layer_losses(const FeatureBundle& generated, const GramMap& style_grams,
                                                 const std::vector<std::string>& layers);

// sum_l w_l * MSE(gram(generated_l), style_gram_l); the weights must sum to 1.
double style_loss(const FeatureBundle& generated, const GramMap& style_grams, const LayerWeights& layer_weights);

GramMap style_grams(const FeatureBundle& style_features, const std::vector<std::string>& layers);
LayerWeights uniform_layer_weights(const std::vector<std::string>& layers);

}  // namespace fbst
