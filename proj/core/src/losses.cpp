#include "genmix/losses.hpp"

#include <algorithm>
#include <cmath>

namespace genmix {

namespace {
constexpr float kScoreFloor = 1e-7f;
}

LossGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("cross entropy expects (B,K) logits");
  const int b = logits.dim(0), k = logits.dim(1);
  if (static_cast<std::size_t>(b) != labels.size())
    throw ShapeError("label count does not match batch size");
  Tensor grad(logits.shape());
  const float* ld = logits.data();
  float* gd = grad.data();
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    const float* row = ld + static_cast<std::int64_t>(i) * k;
    float* grow = gd + static_cast<std::int64_t>(i) * k;
    const float mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
    const double logsum = std::log(sum) + mx;
    const int y = labels[static_cast<std::size_t>(i)];
    total += logsum - row[y];
    const float inv_b = 1.0f / static_cast<float>(b);
    for (int j = 0; j < k; ++j) {
      const auto p = static_cast<float>(std::exp(static_cast<double>(row[j]) - logsum));
      grow[j] = (p - (j == y ? 1.0f : 0.0f)) * inv_b;
    }
  }
  return {total / b, std::move(grad)};
}

LossGrad mse_loss(const Tensor& pred, const Tensor& target) {
  if (!same_shape(pred, target))
    throw ShapeError("mse shapes differ: " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  const std::int64_t n = pred.numel();
  Tensor grad(pred.shape());
  const float* pd = pred.data();
  const float* td = target.data();
  float* gd = grad.data();
  double total = 0.0;
  const float scale = 2.0f / static_cast<float>(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pd[i]) - td[i];
    total += d * d;
    gd[i] = scale * static_cast<float>(d);
  }
  return {total / static_cast<double>(n), std::move(grad)};
}

LossGrad bce_toward_one(const Tensor& scores) {
  const std::int64_t n = scores.numel();
  Tensor grad(scores.shape());
  const float* sd = scores.data();
  float* gd = grad.data();
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const float s = std::max(sd[i], kScoreFloor);
    total -= std::log(static_cast<double>(s));
    gd[i] = -1.0f / (s * static_cast<float>(n));
  }
  return {total / static_cast<double>(n), std::move(grad)};
}

LossGrad bce_toward_zero(const Tensor& scores) {
  const std::int64_t n = scores.numel();
  Tensor grad(scores.shape());
  const float* sd = scores.data();
  float* gd = grad.data();
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const float s = std::min(sd[i], 1.0f - kScoreFloor);
    total -= std::log(1.0 - static_cast<double>(s));
    gd[i] = 1.0f / ((1.0f - s) * static_cast<float>(n));
  }
  return {total / static_cast<double>(n), std::move(grad)};
}

std::vector<int> argmax_rows(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("argmax_rows expects rank-2 input");
  const int b = t.dim(0), k = t.dim(1);
  std::vector<int> out(static_cast<std::size_t>(b));
  const float* d = t.data();
  for (int i = 0; i < b; ++i) {
    const float* row = d + static_cast<std::int64_t>(i) * k;
    out[static_cast<std::size_t>(i)] =
        static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

double accuracy_of(const Tensor& logits, std::span<const int> labels) {
  const auto pred = argmax_rows(logits);
  std::int64_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++ok;
  return pred.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(pred.size());
}

}  // namespace genmix
