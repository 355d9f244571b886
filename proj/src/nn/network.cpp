#include "opsdann/nn/network.hpp"

#include "opsdann/error.hpp"

namespace opsdann::nn {

Stack& Stack::conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel) {
  layers_.push_back({Op::conv1d, LayerParams::conv1d(in_channels, out_channels, kernel)});
  return *this;
}

Stack& Stack::dense(std::size_t in_features, std::size_t out_features) {
  layers_.push_back({Op::dense, LayerParams::dense(in_features, out_features)});
  return *this;
}

Stack& Stack::batchnorm1d(std::size_t channels) {
  layers_.push_back({Op::batchnorm1d, LayerParams::batchnorm1d(channels)});
  return *this;
}

namespace {

Tensor flatten_tensor(const Tensor& x) {
  if (x.rank() < 2) throw Error("flatten: expected a batched tensor");
  return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

}  // namespace

Tensor Stack::forward(const Tensor& input, Mode mode) {
  caches_.resize(layers_.size());  // buffers are reused across passes
  Tensor x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& entry = layers_[i];
    auto& cache = caches_[i];
    switch (entry.op) {
      case Op::conv1d:
        x = conv1d_forward(x, entry.params, &cache.conv);
        break;
      case Op::dense:
        cache.input = x;
        x = dense_forward(x, entry.params);
        break;
      case Op::batchnorm1d:
        x = batchnorm1d_forward(x, entry.params, mode, &cache.bn);
        break;
      case Op::relu:
        x = activation_forward(x, Activation::relu);
        cache.output = x;
        break;
      case Op::sigmoid:
        x = activation_forward(x, Activation::sigmoid);
        cache.output = x;
        break;
      case Op::softmax:
        x = activation_forward(x, Activation::softmax);
        cache.output = x;
        break;
      case Op::flatten:
        cache.input = Tensor(x.shape());  // only the shape is needed
        x = flatten_tensor(x);
        break;
    }
  }
  cached_ = true;
  return x;
}

Tensor Stack::infer(const Tensor& input) const { return infer_prefix(input, layers_.size()); }

Tensor Stack::infer_prefix(const Tensor& input, std::size_t end) const {
  if (end > layers_.size()) throw Error("infer_prefix: layer index out of range");
  Tensor x = input;
  for (std::size_t i = 0; i < end; ++i) {
    const auto& entry = layers_[i];
    switch (entry.op) {
      case Op::conv1d:
        x = conv1d_forward(x, entry.params);
        break;
      case Op::dense:
        x = dense_forward(x, entry.params);
        break;
      case Op::batchnorm1d: {
        LayerParams frozen = entry.params;
        x = batchnorm1d_forward(x, frozen, Mode::eval);
        break;
      }
      case Op::relu:
        x = activation_forward(x, Activation::relu);
        break;
      case Op::sigmoid:
        x = activation_forward(x, Activation::sigmoid);
        break;
      case Op::softmax:
        x = activation_forward(x, Activation::softmax);
        break;
      case Op::flatten:
        x = flatten_tensor(x);
        break;
    }
  }
  return x;
}

Tensor Stack::backward(const Tensor& grad_output, bool input_grad) {
  if (!cached_) throw Error("Stack::backward called without a preceding forward pass");
  Tensor g = grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    auto& entry = layers_[i];
    auto& cache = caches_[i];
    switch (entry.op) {
      case Op::conv1d:
        if (i == 0 && !input_grad) {
          conv1d_backward(g, cache.conv, entry.params, false);
          g = Tensor();
          break;
        }
        g = conv1d_backward(g, cache.conv, entry.params);
        break;
      case Op::dense:
        g = dense_backward(g, cache.input, entry.params);
        break;
      case Op::batchnorm1d:
        g = batchnorm1d_backward(g, cache.bn, entry.params);
        break;
      case Op::relu:
        g = activation_backward(g, cache.output, Activation::relu);
        break;
      case Op::sigmoid:
        g = activation_backward(g, cache.output, Activation::sigmoid);
        break;
      case Op::softmax:
        g = activation_backward(g, cache.output, Activation::softmax);
        break;
      case Op::flatten:
        g = g.reshaped(cache.input.shape());
        break;
    }
  }
  cached_ = false;
  return g;
}

void Stack::zero_grad() {
  for (auto* layer : parameter_layers()) layer->zero_grad();
}

std::size_t Stack::parameter_count() const {
  std::size_t total = 0;
  for (const auto* layer : parameter_layers()) total += layer->parameter_count();
  return total;
}

std::vector<LayerParams*> Stack::parameter_layers() {
  std::vector<LayerParams*> out;
  for (auto& entry : layers_) {
    if (entry.op == Op::conv1d || entry.op == Op::dense || entry.op == Op::batchnorm1d) {
      out.push_back(&entry.params);
    }
  }
  return out;
}

std::vector<const LayerParams*> Stack::parameter_layers() const {
  std::vector<const LayerParams*> out;
  for (const auto& entry : layers_) {
    if (entry.op == Op::conv1d || entry.op == Op::dense || entry.op == Op::batchnorm1d) {
      out.push_back(&entry.params);
    }
  }
  return out;
}

}  // namespace opsdann::nn
