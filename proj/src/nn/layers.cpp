#include "opsdann/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "opsdann/error.hpp"

namespace opsdann::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_kind(const LayerParams& params, LayerKind kind, const char* op) {
  if (params.kind != kind) throw Error(std::string(op) + ": layer parameters of wrong kind");
}

}  // namespace

LayerParams LayerParams::conv1d(std::size_t in_channels, std::size_t out_channels,
                                std::size_t kernel_size) {
  LayerParams p;
  p.kind = LayerKind::conv1d;
  p.weights = Tensor({out_channels, in_channels, kernel_size});
  p.bias = Tensor({out_channels});
  return p;
}

LayerParams LayerParams::dense(std::size_t in_features, std::size_t out_features) {
  LayerParams p;
  p.kind = LayerKind::dense;
  p.weights = Tensor({out_features, in_features});
  p.bias = Tensor({out_features});
  return p;
}

LayerParams LayerParams::batchnorm1d(std::size_t channels, double momentum, double epsilon) {
  if (!(momentum > 0.0 && momentum <= 1.0)) throw Error("batchnorm momentum must lie in (0,1]");
  if (!(epsilon > 0.0)) throw Error("batchnorm epsilon must be positive");
  LayerParams p;
  p.kind = LayerKind::batchnorm1d;
  p.weights = Tensor({channels}, 1.0);
  p.bias = Tensor({channels}, 0.0);
  p.running_mean = Tensor({channels}, 0.0);
  p.running_var = Tensor({channels}, 1.0);
  p.momentum = momentum;
  p.epsilon = epsilon;
  return p;
}

void LayerParams::zero_grad() {
  weights.zero_grad();
  bias.zero_grad();
}

// ---------------------------------------------------------------------------
// conv1d

namespace {

// Kernel tap k as an out x in matrix.
RowMatrix conv_tap(const LayerParams& params, std::size_t k) {
  const std::size_t out_ch = params.weights.dim(0), in_ch = params.weights.dim(1), kernel = params.weights.dim(2);
  RowMatrix w(out_ch, in_ch);
  for (std::size_t o = 0; o < out_ch; ++o)
    for (std::size_t c = 0; c < in_ch; ++c) w(o, c) = params.weights[(o * in_ch + c) * kernel + k];
  return w;
}

}  // namespace

// Each sample occupies a zero-padded segment of length T + kernel - 1 in an in x (batch*segment)
// matrix; output column b*segment + t then equals sum_k W_k * padded(:, b*segment + t + k).
Tensor conv1d_forward(const Tensor& input, const LayerParams& params, Conv1dCache* cache) {
  require_kind(params, LayerKind::conv1d, "conv1d_forward");
  if (input.rank() != 3) throw Error("conv1d_forward: expected batch x channels x time input");
  const std::size_t batch = input.dim(0), in_ch = input.dim(1), steps = input.dim(2);
  const std::size_t out_ch = params.weights.dim(0), kernel = params.weights.dim(2);
  if (params.weights.dim(1) != in_ch) {
    throw Error("conv1d_forward: input has " + std::to_string(in_ch) + " channels, weights expect " +
                std::to_string(params.weights.dim(1)));
  }
  input.check_finite("conv1d input");
  const std::size_t pad_left = same_pad_left(kernel);
  const std::size_t segment = steps + kernel - 1, padded_cols = batch * segment, cols = padded_cols - (kernel - 1);

  AlignedVector local;
  AlignedVector& padded = cache ? cache->padded : local;
  padded.assign(in_ch * padded_cols, 0.0);
  const double* x = input.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < in_ch; ++c)
      std::copy_n(x + (b * in_ch + c) * steps, steps, padded.data() + c * padded_cols + b * segment + pad_left);

  ConstMatrixMap pad_map(padded.data(), in_ch, padded_cols);
  RowMatrix product = RowMatrix::Zero(out_ch, cols);
  for (std::size_t k = 0; k < kernel; ++k) product.noalias() += conv_tap(params, k) * pad_map.middleCols(k, cols);

  Tensor output({batch, out_ch, steps});
  double* y = output.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      const double bias = params.bias[o];
      const double* src = product.data() + o * cols + b * segment;
      double* dst = y + (b * out_ch + o) * steps;
      for (std::size_t t = 0; t < steps; ++t) dst[t] = src[t] + bias;
    }
  }
  if (cache) cache->input_shape = input.shape();
  return output;
}

Tensor conv1d_backward(const Tensor& grad_output, const Conv1dCache& cache, LayerParams& params,
                       bool input_grad) {
  require_kind(params, LayerKind::conv1d, "conv1d_backward");
  const std::size_t batch = cache.input_shape[0], in_ch = cache.input_shape[1],
                    steps = cache.input_shape[2];
  const std::size_t out_ch = params.weights.dim(0), kernel = params.weights.dim(2);
  if (grad_output.shape() != Shape{batch, out_ch, steps}) {
    throw Error("conv1d_backward: gradient shape " + shape_string(grad_output.shape()) +
                " does not match output");
  }
  const std::size_t pad_left = same_pad_left(kernel);
  const std::size_t segment = steps + kernel - 1, padded_cols = batch * segment, cols = padded_cols - (kernel - 1);

  // Gradient in padded-column layout; columns between samples stay zero.
  RowMatrix grad_product = RowMatrix::Zero(out_ch, cols);
  const double* gy = grad_output.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      std::copy_n(gy + (b * out_ch + o) * steps, steps, grad_product.data() + o * cols + b * segment);
    }
  }

  ConstMatrixMap pad_map(cache.padded.data(), in_ch, padded_cols);
  auto grad_w = params.weights.grad();
  for (std::size_t k = 0; k < kernel; ++k) {
    const RowMatrix tap_grad = grad_product * pad_map.middleCols(k, cols).transpose();
    for (std::size_t o = 0; o < out_ch; ++o)
      for (std::size_t c = 0; c < in_ch; ++c) grad_w[(o * in_ch + c) * kernel + k] += tap_grad(o, c);
  }
  auto grad_b = params.bias.grad();
  for (std::size_t o = 0; o < out_ch; ++o) grad_b[o] += grad_product.row(o).sum();
  if (!input_grad) return {};

  RowMatrix grad_padded = RowMatrix::Zero(in_ch, padded_cols);
  for (std::size_t k = 0; k < kernel; ++k) {
    grad_padded.middleCols(k, cols).noalias() += conv_tap(params, k).transpose() * grad_product;
  }
  Tensor grad_input(cache.input_shape);
  double* gx = grad_input.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < in_ch; ++c)
      std::copy_n(grad_padded.data() + c * padded_cols + b * segment + pad_left, steps, gx + (b * in_ch + c) * steps);
  return grad_input;
}

// ---------------------------------------------------------------------------
// dense

Tensor dense_forward(const Tensor& input, const LayerParams& params) {
  require_kind(params, LayerKind::dense, "dense_forward");
  if (input.rank() != 2) throw Error("dense_forward: expected batch x features input");
  const std::size_t batch = input.dim(0), in = input.dim(1), out = params.weights.dim(0);
  if (params.weights.dim(1) != in) {
    throw Error("dense_forward: input has " + std::to_string(in) + " features, weights expect " +
                std::to_string(params.weights.dim(1)));
  }
  input.check_finite("dense input");
  Tensor output({batch, out});
  ConstMatrixMap x(input.data(), batch, in);
  ConstMatrixMap w(params.weights.data(), out, in);
  MatrixMap y(output.data(), batch, out);
  y.noalias() = x * w.transpose();
  Eigen::Map<const Eigen::RowVectorXd> bias(params.bias.data(), out);
  y.rowwise() += bias;
  return output;
}

Tensor dense_backward(const Tensor& grad_output, const Tensor& input, LayerParams& params) {
  require_kind(params, LayerKind::dense, "dense_backward");
  const std::size_t batch = input.dim(0), in = input.dim(1), out = params.weights.dim(0);
  if (grad_output.shape() != Shape{batch, out}) {
    throw Error("dense_backward: gradient shape " + shape_string(grad_output.shape()) +
                " does not match output");
  }
  ConstMatrixMap gy(grad_output.data(), batch, out);
  ConstMatrixMap x(input.data(), batch, in);
  MatrixMap gw(params.weights.grad().data(), out, in);
  gw.noalias() += gy.transpose() * x;
  // plain loop: Eigen reductions over mapped memory peel by address alignment, which
  // would make the summation order (and the result) allocation dependent
  auto gb = params.bias.grad();
  const double* g = grad_output.data();
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t o = 0; o < out; ++o) gb[o] += g[i * out + o];

  Tensor grad_input({batch, in});
  ConstMatrixMap w(params.weights.data(), out, in);
  MatrixMap gx(grad_input.data(), batch, in);
  gx.noalias() = gy * w;
  return grad_input;
}

// ---------------------------------------------------------------------------
// batchnorm1d

namespace {

struct BnLayout {
  std::size_t batch, channels, steps;
};

BnLayout bn_layout(const Tensor& input) {
  if (input.rank() == 3) return {input.dim(0), input.dim(1), input.dim(2)};
  if (input.rank() == 2) return {input.dim(0), input.dim(1), 1};
  throw Error("batchnorm1d: expected batch x channels [x time] input");
}

}  // namespace

void channel_statistics(const Tensor& input, std::vector<double>& mean, std::vector<double>& var) {
  const auto [batch, channels, steps] = bn_layout(input);
  const double count = static_cast<double>(batch * steps);
  mean.assign(channels, 0.0);
  var.assign(channels, 0.0);
  const double* x = input.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < steps; ++t) mean[c] += x[(b * channels + c) * steps + t];
  for (auto& m : mean) m /= count;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < steps; ++t) {
        const double d = x[(b * channels + c) * steps + t] - mean[c];
        var[c] += d * d;
      }
  for (auto& v : var) v /= count;
}

Tensor batchnorm1d_forward(const Tensor& input, LayerParams& params, Mode mode,
                           BatchNormCache* cache) {
  require_kind(params, LayerKind::batchnorm1d, "batchnorm1d_forward");
  const auto [batch, channels, steps] = bn_layout(input);
  if (params.weights.size() != channels) throw Error("batchnorm1d: channel count mismatch");
  input.check_finite("batchnorm1d input");

  std::vector<double> mean, var;
  if (mode == Mode::train) {
    if (batch < 2) throw Error("batchnorm1d: train mode requires a batch of at least 2");
    channel_statistics(input, mean, var);
    const double m = params.momentum;
    for (std::size_t c = 0; c < channels; ++c) {
      params.running_mean[c] = (1.0 - m) * params.running_mean[c] + m * mean[c];
      params.running_var[c] = (1.0 - m) * params.running_var[c] + m * var[c];
    }
  } else {
    mean.assign(params.running_mean.values().begin(), params.running_mean.values().end());
    var.assign(params.running_var.values().begin(), params.running_var.values().end());
  }

  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + params.epsilon);

  Tensor normalized(input.shape());
  Tensor output(input.shape());
  const double* x = input.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double scale = params.weights[c], shift = params.bias[c];
      for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t i = (b * channels + c) * steps + t;
        const double xhat = (x[i] - mean[c]) * inv_std[c];
        normalized[i] = xhat;
        output[i] = scale * xhat + shift;
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return output;
}

Tensor batchnorm1d_backward(const Tensor& grad_output, const BatchNormCache& cache,
                            LayerParams& params) {
  require_kind(params, LayerKind::batchnorm1d, "batchnorm1d_backward");
  const auto [batch, channels, steps] = bn_layout(cache.normalized);
  if (grad_output.shape() != cache.normalized.shape()) {
    throw Error("batchnorm1d_backward: gradient shape mismatch");
  }
  const double count = static_cast<double>(batch * steps);
  auto grad_scale = params.weights.grad();
  auto grad_shift = params.bias.grad();
  Tensor grad_input(grad_output.shape());
  const double* gy = grad_output.data();
  const double* xhat = cache.normalized.data();

  for (std::size_t c = 0; c < channels; ++c) {
    double sum_gy = 0.0, sum_gy_xhat = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t i = (b * channels + c) * steps + t;
        sum_gy += gy[i];
        sum_gy_xhat += gy[i] * xhat[i];
      }
    grad_scale[c] += sum_gy_xhat;
    grad_shift[c] += sum_gy;
    const double scale = params.weights[c];
    const double factor = scale * cache.inv_std[c];
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t i = (b * channels + c) * steps + t;
        if (cache.mode == Mode::train) {
          grad_input[i] = factor * (gy[i] - sum_gy / count - xhat[i] * sum_gy_xhat / count);
        } else {
          grad_input[i] = factor * gy[i];
        }
      }
  }
  return grad_input;
}

// ---------------------------------------------------------------------------
// activations

Tensor activation_forward(const Tensor& input, Activation kind) {
  Tensor output(input.shape());
  const double* x = input.data();
  double* y = output.data();
  const std::size_t n = input.size();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] >= 0.0) {
          y[i] = 1.0 / (1.0 + std::exp(-x[i]));
        } else {
          const double e = std::exp(x[i]);
          y[i] = e / (1.0 + e);
        }
      }
      break;
    case Activation::softmax: {
      const std::size_t width = input.shape().back();
      for (std::size_t row = 0; row < n / width; ++row) {
        const double* xr = x + row * width;
        double* yr = y + row * width;
        const double peak = *std::max_element(xr, xr + width);
        double total = 0.0;
        for (std::size_t j = 0; j < width; ++j) total += (yr[j] = std::exp(xr[j] - peak));
        for (std::size_t j = 0; j < width; ++j) yr[j] /= total;
      }
      break;
    }
  }
  return output;
}

Tensor activation_backward(const Tensor& grad_output, const Tensor& output, Activation kind) {
  if (grad_output.shape() != output.shape()) throw Error("activation_backward: shape mismatch");
  Tensor grad_input(output.shape());
  const double* g = grad_output.data();
  const double* y = output.data();
  double* gx = grad_input.data();
  const std::size_t n = output.size();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) gx[i] = y[i] > 0.0 ? g[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) gx[i] = g[i] * y[i] * (1.0 - y[i]);
      break;
    case Activation::softmax: {
      const std::size_t width = output.shape().back();
      for (std::size_t row = 0; row < n / width; ++row) {
        const double* gr = g + row * width;
        const double* yr = y + row * width;
        double dot = 0.0;
        for (std::size_t j = 0; j < width; ++j) dot += gr[j] * yr[j];
        for (std::size_t j = 0; j < width; ++j) gx[row * width + j] = yr[j] * (gr[j] - dot);
      }
      break;
    }
  }
  return grad_input;
}

// ---------------------------------------------------------------------------
// gradient reversal

Tensor grl_forward(const Tensor& input) {
  Tensor output = input;
  output.drop_grad();
  return output;
}

Tensor grl_backward(const Tensor& grad_output, double rho) {
  if (rho < 0.0) throw Error("gradient reversal factor must be non-negative");
  Tensor grad_input(grad_output.shape());
  for (std::size_t i = 0; i < grad_output.size(); ++i) grad_input[i] = -rho * grad_output[i];
  return grad_input;
}

}  // namespace opsdann::nn
