#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "opsdann/nn/container.hpp"
#include "opsdann/nn/network.hpp"

namespace opsdann::da {

enum class Method { source_only, dann, ops_dann_hard, ops_dann_soft, multiclass_ops_dann, mk_mmd, adabn };

inline constexpr Method kAllMethods[] = {Method::source_only,   Method::dann,
                                         Method::ops_dann_hard, Method::ops_dann_soft,
                                         Method::multiclass_ops_dann, Method::mk_mmd,
                                         Method::adabn};

std::string_view method_name(Method method);
Method parse_method(std::string_view name);
bool is_adversarial(Method method);

inline constexpr std::size_t kFeatureDim = 50;
inline constexpr std::size_t kMultiClassOutputs = 6;

/// conv 18->10->10->1 (kernel 10, same padding), ReLU after each, flattened to 50.
/// With `batchnorm` a batch-norm layer follows every convolution.
nn::Stack make_feature_extractor(bool batchnorm = false);
/// 50 -> 50 ReLU -> 1 sigmoid
nn::Stack make_regressor();
/// 50 -> 50 ReLU -> 30 ReLU -> outputs (sigmoid when 1, softmax otherwise)
nn::Stack make_discriminator(std::size_t outputs = 1);
/// 50 -> 50 ReLU -> 30 ReLU -> 3 softmax
nn::Stack make_phase_classifier();

struct ModelBundle {
  Method method = Method::source_only;
  nn::Stack feature_extractor;
  nn::Stack regressor;
  std::vector<nn::Stack> discriminators;
  std::optional<nn::Stack> phase_classifier;

  std::size_t parameter_count() const;
  /// Every parameterized layer: extractor, regressor, discriminators, classifier.
  std::vector<nn::LayerParams*> parameter_layers();
  std::vector<const nn::LayerParams*> parameter_layers() const;
  void zero_grad();

  nn::Container to_container() const;
  /// Copies values from a container written by to_container() of the same method.
  void load(const nn::Container& container);
};

/// Architecture for the method, Xavier-initialized from `seed`. `n_phases` sets the
/// number of per-phase heads for the OPS variants.
ModelBundle build_model(Method method, std::uint64_t seed, int n_phases = 3);

/// Bitwise comparison of every parameter and running statistic.
bool same_parameters(const ModelBundle& a, const ModelBundle& b);

}  // namespace opsdann::da
