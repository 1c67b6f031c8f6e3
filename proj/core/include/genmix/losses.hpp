#pragma once

#include <span>
#include <vector>

#include "genmix/tensor.hpp"

namespace genmix {

struct LossGrad {
  double loss;
  Tensor grad;  // d loss / d input, same shape as the input
};

// Mean softmax cross-entropy over the batch; logits (B, K), labels in [0, K).
LossGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Mean squared error over all elements.
LossGrad mse_loss(const Tensor& pred, const Tensor& target);

// GAN terms on sigmoid scores s in (0,1), shape (B, 1):
//   toward one:  -mean log s        (real / winning-generator term)
//   toward zero: -mean log (1 - s)  (fake term)
LossGrad bce_toward_one(const Tensor& scores);
LossGrad bce_toward_zero(const Tensor& scores);

std::vector<int> argmax_rows(const Tensor& t);

// Fraction of rows whose argmax equals the label.
double accuracy_of(const Tensor& logits, std::span<const int> labels);

}  // namespace genmix
