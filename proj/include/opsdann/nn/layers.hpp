#pragma once

#include <cstddef>
#include <vector>

#include "opsdann/nn/tensor.hpp"

namespace opsdann::nn {

enum class LayerKind { conv1d, dense, batchnorm1d };

enum class Mode { train, eval };

/// Trainable parameters of one layer.
///
/// conv1d:      weights out x in x kernel, bias out
/// dense:       weights out x in, bias out
/// batchnorm1d: weights (scale) ch, bias (shift) ch, plus running statistics
struct LayerParams {
  LayerKind kind = LayerKind::dense;
  Tensor weights;
  Tensor bias;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
  /// Frozen layers receive no optimizer updates.
  bool frozen = false;

  static LayerParams conv1d(std::size_t in_channels, std::size_t out_channels,
                            std::size_t kernel_size);
  static LayerParams dense(std::size_t in_features, std::size_t out_features);
  static LayerParams batchnorm1d(std::size_t channels, double momentum = 0.1,
                                 double epsilon = 1e-5);

  /// Trainable entries only (running statistics excluded).
  std::size_t parameter_count() const { return weights.size() + bias.size(); }
  void zero_grad();
};

// "Same" padding split for even kernels: the extra zero goes on the right.
constexpr std::size_t same_pad_left(std::size_t kernel) { return (kernel - 1) / 2; }
constexpr std::size_t same_pad_right(std::size_t kernel) { return kernel - 1 - same_pad_left(kernel); }

/// Zero-padded input kept from the forward pass for the weight gradient.
struct Conv1dCache {
  AlignedVector padded;  // in x (batch * (T + kernel - 1)), row-major
  Shape input_shape;
};

Tensor conv1d_forward(const Tensor& input, const LayerParams& params, Conv1dCache* cache = nullptr);
/// Accumulates weight/bias gradients into `params` and returns the input gradient
/// (an empty tensor when `input_grad` is false).
Tensor conv1d_backward(const Tensor& grad_output, const Conv1dCache& cache, LayerParams& params,
                       bool input_grad = true);

Tensor dense_forward(const Tensor& input, const LayerParams& params);
Tensor dense_backward(const Tensor& grad_output, const Tensor& input, LayerParams& params);

struct BatchNormCache {
  Tensor normalized;               // x_hat, same shape as input
  std::vector<double> inv_std;     // per channel
  Mode mode = Mode::train;
};

/// Input batch x ch x T (or batch x ch). Train mode uses batch statistics (biased variance)
/// and updates the running statistics as (1-m)*old + m*batch.
Tensor batchnorm1d_forward(const Tensor& input, LayerParams& params, Mode mode,
                           BatchNormCache* cache = nullptr);
Tensor batchnorm1d_backward(const Tensor& grad_output, const BatchNormCache& cache,
                            LayerParams& params);

/// Per-channel mean and biased variance over batch and time.
void channel_statistics(const Tensor& input, std::vector<double>& mean, std::vector<double>& var);

enum class Activation { relu, sigmoid, softmax };

/// Softmax acts on the last axis.
Tensor activation_forward(const Tensor& input, Activation kind);
/// Uses the forward output, which is sufficient for all three kinds.
Tensor activation_backward(const Tensor& grad_output, const Tensor& output, Activation kind);

/// Gradient reversal: identity forward, -rho * grad backward.
Tensor grl_forward(const Tensor& input);
Tensor grl_backward(const Tensor& grad_output, double rho);

}  // namespace opsdann::nn
