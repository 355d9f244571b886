#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "opsdann/nn/layers.hpp"

namespace opsdann::nn {

using Rng = std::mt19937_64;

/// Xavier (Glorot) normal weights with variance 2 / (fan_in + fan_out), zero biases.
/// Convolution fans include the kernel width. Batch-norm layers are reset to scale 1,
/// shift 0 and unit running statistics.
void xavier_init(std::span<LayerParams* const> layers, Rng& rng);

/// SGD with classical momentum: v <- m v + g; theta <- theta - lr v.
class Sgd {
 public:
  explicit Sgd(double learning_rate = 0.01, double momentum = 0.9);

  void set_learning_rate(double lr);
  double learning_rate() const { return learning_rate_; }
  double momentum() const { return momentum_; }

  /// Applies one update to every non-frozen layer. The layer list must be the same
  /// (in order and shape) on every call.
  void step(std::span<LayerParams* const> layers);

  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  double learning_rate_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;  // weights, bias per layer, in order
};

/// 2 / (1 + exp(-10 p)) - 1, the gradient-reversal ramp.
double schedule_rho(double progress);
/// alpha0 / (1 + 10 p)^0.75
double schedule_lr(double progress, double alpha0);

}  // namespace opsdann::nn
