#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "opsdann/nn/layers.hpp"
#include "opsdann/nn/tensor.hpp"

namespace opsdann::nn {

/// Fixed feed-forward chain of layers with cached activations for one backward pass.
///
/// forward() stores whatever backward() needs; calling backward() twice without a
/// forward() in between is a contract violation.
class Stack {
 public:
  enum class Op { conv1d, dense, batchnorm1d, relu, sigmoid, softmax, flatten };

  Stack() = default;
  explicit Stack(std::string name) : name_(std::move(name)) {}

  Stack& conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel);
  Stack& dense(std::size_t in_features, std::size_t out_features);
  Stack& batchnorm1d(std::size_t channels);
  Stack& relu() { return push(Op::relu); }
  Stack& sigmoid() { return push(Op::sigmoid); }
  Stack& softmax() { return push(Op::softmax); }
  /// batch x a x b -> batch x (a*b)
  Stack& flatten() { return push(Op::flatten); }

  Tensor forward(const Tensor& input, Mode mode = Mode::train);
  /// Forward pass that keeps no cache. Eval mode never touches running statistics.
  Tensor infer(const Tensor& input) const;
  /// Runs layers [0, end) in inference mode.
  Tensor infer_prefix(const Tensor& input, std::size_t end) const;
  /// Accumulates parameter gradients and returns d loss / d input. With `input_grad`
  /// false a leading convolution skips its input gradient and an empty tensor is returned.
  Tensor backward(const Tensor& grad_output, bool input_grad = true);

  void zero_grad();
  std::size_t parameter_count() const;
  /// Layers carrying parameters, in construction order.
  std::vector<LayerParams*> parameter_layers();
  std::vector<const LayerParams*> parameter_layers() const;

  const std::string& name() const { return name_; }
  std::size_t size() const { return layers_.size(); }
  Op op(std::size_t i) const { return layers_[i].op; }
  LayerParams& params(std::size_t i) { return layers_.at(i).params; }
  const LayerParams& params(std::size_t i) const { return layers_.at(i).params; }

 private:
  struct Entry {
    Op op;
    LayerParams params;
  };
  struct Cache {
    Tensor input;
    Tensor output;
    Conv1dCache conv;
    BatchNormCache bn;
  };

  Stack& push(Op op) {
    layers_.push_back({op, {}});
    return *this;
  }

  std::string name_;
  std::vector<Entry> layers_;
  std::vector<Cache> caches_;
  bool cached_ = false;
};

}  // namespace opsdann::nn
