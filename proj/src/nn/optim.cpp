#include "opsdann/nn/optim.hpp"

#include <cmath>

#include "opsdann/error.hpp"

namespace opsdann::nn {

void xavier_init(std::span<LayerParams* const> layers, Rng& rng) {
  for (LayerParams* layer : layers) {
    if (layer->kind == LayerKind::batchnorm1d) {
      std::fill(layer->weights.values().begin(), layer->weights.values().end(), 1.0);
      std::fill(layer->bias.values().begin(), layer->bias.values().end(), 0.0);
      std::fill(layer->running_mean.values().begin(), layer->running_mean.values().end(), 0.0);
      std::fill(layer->running_var.values().begin(), layer->running_var.values().end(), 1.0);
      continue;
    }
    const auto& shape = layer->weights.shape();
    const double receptive = layer->kind == LayerKind::conv1d ? static_cast<double>(shape[2]) : 1.0;
    const double fan_in = static_cast<double>(shape[1]) * receptive;
    const double fan_out = static_cast<double>(shape[0]) * receptive;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
    for (double& w : layer->weights.values()) w = normal(rng);
    std::fill(layer->bias.values().begin(), layer->bias.values().end(), 0.0);
  }
}

Sgd::Sgd(double learning_rate, double momentum) : momentum_(momentum) {
  set_learning_rate(learning_rate);
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("momentum must lie in [0,1)");
}

void Sgd::set_learning_rate(double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error("learning rate must be positive");
  learning_rate_ = lr;
}

void Sgd::step(std::span<LayerParams* const> layers) {
  if (velocity_.empty()) {
    for (LayerParams* layer : layers) {
      velocity_.emplace_back(layer->weights.size(), 0.0);
      velocity_.emplace_back(layer->bias.size(), 0.0);
    }
  }
  if (velocity_.size() != 2 * layers.size()) throw Error("Sgd::step: parameter list changed");

  for (std::size_t l = 0; l < layers.size(); ++l) {
    LayerParams* layer = layers[l];
    Tensor* tensors[2] = {&layer->weights, &layer->bias};
    for (int k = 0; k < 2; ++k) {
      Tensor& param = *tensors[k];
      auto& v = velocity_[2 * l + k];
      if (v.size() != param.size()) throw Error("Sgd::step: parameter shape changed");
      if (layer->frozen || !param.has_grad()) continue;
      auto grad = param.grad();
      check_finite(grad, "gradient");
      auto values = param.values();
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum_ * v[i] + grad[i];
        values[i] -= learning_rate_ * v[i];
      }
    }
  }
}

double schedule_rho(double progress) {
  if (!(progress >= 0.0 && progress <= 1.0)) throw Error("training progress must lie in [0,1]");
  return 2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0;
}

double schedule_lr(double progress, double alpha0) {
  if (!(alpha0 > 0.0)) throw Error("initial learning rate must be positive");
  return alpha0 / std::pow(1.0 + 10.0 * progress, 0.75);
}

}  // namespace opsdann::nn
