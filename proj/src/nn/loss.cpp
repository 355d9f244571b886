#include "opsdann/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "opsdann/error.hpp"

namespace opsdann::nn {

namespace {

void require_batch(const Tensor& pred, std::size_t labels, const char* what) {
  if (pred.empty() || labels == 0) throw Error(std::string(what) + ": empty batch");
  if (pred.dim(0) != labels) {
    throw Error(std::string(what) + ": " + std::to_string(pred.dim(0)) + " predictions for " +
                std::to_string(labels) + " labels");
  }
  pred.check_finite(what);
}

void require_weights(std::span<const double> weights, std::size_t n, const char* what) {
  if (weights.empty()) return;
  if (weights.size() != n) throw Error(std::string(what) + ": weight count mismatch");
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(std::string(what) + ": weights must be finite and non-negative");
    }
  }
}

// Turns per-sample losses and their derivatives into the reduced value, scaling the
// derivative in place and filling weight gradients.
void reduce(std::span<const double> per_sample, std::span<const double> weights, Reduction reduction,
            LossResult& result, std::span<double> derivative) {
  const std::size_t n = per_sample.size();
  double denominator = static_cast<double>(n);
  if (reduction == Reduction::weighted_mean && !weights.empty()) {
    denominator = 0.0;
    for (double w : weights) denominator += w;
  }
  if (denominator == 0.0) {
    result.value = 0.0;
    std::fill(derivative.begin(), derivative.end(), 0.0);
    if (!weights.empty()) result.weight_grad.assign(n, 0.0);
    return;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (weights.empty() ? 1.0 : weights[i]) * per_sample[i];
  result.value = total / denominator;

  const std::size_t width = derivative.size() / n;
  for (std::size_t i = 0; i < n; ++i) {
    const double scale = (weights.empty() ? 1.0 : weights[i]) / denominator;
    for (std::size_t j = 0; j < width; ++j) derivative[i * width + j] *= scale;
  }
  if (!weights.empty()) {
    result.weight_grad.resize(n);
    const bool normalized = reduction == Reduction::weighted_mean;
    for (std::size_t i = 0; i < n; ++i) {
      result.weight_grad[i] = (per_sample[i] - (normalized ? result.value : 0.0)) / denominator;
    }
  }
}

}  // namespace

LossResult rul_rmse(const Tensor& pred, std::span<const double> label) {
  require_batch(pred, label.size(), "rul_rmse");
  const std::size_t n = label.size();
  if (pred.size() != n) throw Error("rul_rmse: expected one prediction per sample");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += (pred[i] - label[i]) * (pred[i] - label[i]);
  LossResult result;
  result.value = std::sqrt(sum / static_cast<double>(n));
  result.grad = Tensor(pred.shape());
  if (result.value > 0.0) {
    const double scale = 1.0 / (static_cast<double>(n) * result.value);
    for (std::size_t i = 0; i < n; ++i) result.grad[i] = (pred[i] - label[i]) * scale;
  }
  return result;
}

LossResult rul_mae(const Tensor& pred, std::span<const double> label) {
  require_batch(pred, label.size(), "rul_mae");
  const std::size_t n = label.size();
  if (pred.size() != n) throw Error("rul_mae: expected one prediction per sample");
  LossResult result;
  result.grad = Tensor(pred.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = pred[i] - label[i];
    sum += std::abs(diff);
    result.grad[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / static_cast<double>(n);
  }
  result.value = sum / static_cast<double>(n);
  return result;
}

LossResult bce(const Tensor& pred, std::span<const double> label, std::span<const double> weights,
               Reduction reduction) {
  require_batch(pred, label.size(), "bce");
  const std::size_t n = label.size();
  if (pred.size() != n) throw Error("bce: expected one probability per sample");
  require_weights(weights, n, "bce");

  std::vector<double> per_sample(n);
  LossResult result;
  result.grad = Tensor(pred.shape());
  auto derivative = result.grad.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double p = pred[i], y = label[i];
    if (y != 0.0 && y != 1.0) throw Error("bce: labels must be 0 or 1");
    if (p < 0.0 || p > 1.0) throw Error("bce: prediction outside [0,1]");
    const double clamped = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    per_sample[i] = -(y * std::log(clamped) + (1.0 - y) * std::log(1.0 - clamped));
    const bool inside = p > kProbClamp && p < 1.0 - kProbClamp;
    derivative[i] = inside ? -(y / clamped - (1.0 - y) / (1.0 - clamped)) : 0.0;
  }
  reduce(per_sample, weights, reduction, result, derivative);
  return result;
}

LossResult cross_entropy(const Tensor& probs, std::span<const int> label,
                         std::span<const double> weights, Reduction reduction) {
  require_batch(probs, label.size(), "cross_entropy");
  if (probs.rank() != 2) throw Error("cross_entropy: expected batch x classes probabilities");
  const std::size_t n = label.size(), classes = probs.dim(1);
  require_weights(weights, n, "cross_entropy");

  std::vector<double> per_sample(n);
  LossResult result;
  result.grad = Tensor(probs.shape());
  auto derivative = result.grad.values();
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] < 0 || static_cast<std::size_t>(label[i]) >= classes) {
      throw Error("cross_entropy: class index " + std::to_string(label[i]) + " out of range");
    }
    const double p = probs[i * classes + label[i]];
    if (p < 0.0 || p > 1.0) throw Error("cross_entropy: probability outside [0,1]");
    const double clamped = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    per_sample[i] = -std::log(clamped);
    const bool inside = p > kProbClamp && p < 1.0 - kProbClamp;
    derivative[i * classes + label[i]] = inside ? -1.0 / clamped : 0.0;
  }
  reduce(per_sample, weights, reduction, result, derivative);
  return result;
}

LossResult compute_loss(LossKind kind, const Tensor& pred, std::span<const double> label,
                        std::span<const double> weights, Reduction reduction) {
  switch (kind) {
    case LossKind::rul_rmse:
      return rul_rmse(pred, label);
    case LossKind::rul_mae:
      return rul_mae(pred, label);
    case LossKind::bce:
      return bce(pred, label, weights, reduction);
    case LossKind::ce: {
      std::vector<int> classes(label.size());
      for (std::size_t i = 0; i < label.size(); ++i) classes[i] = static_cast<int>(label[i]);
      return cross_entropy(pred, classes, weights, reduction);
    }
  }
  throw Error("compute_loss: unknown loss kind");
}

}  // namespace opsdann::nn
