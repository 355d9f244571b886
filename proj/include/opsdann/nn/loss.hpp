#pragma once

#include <span>
#include <vector>

#include "opsdann/nn/tensor.hpp"

namespace opsdann::nn {

enum class LossKind { rul_rmse, rul_mae, bce, ce };

/// How per-sample losses l_i with weights w_i are reduced:
///   mean          sum(w_i l_i) / n
///   weighted_mean sum(w_i l_i) / sum(w_i), zero when every weight is zero
enum class Reduction { mean, weighted_mean };

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before the logarithm.
inline constexpr double kProbClamp = 1e-7;

struct LossResult {
  double value = 0.0;
  Tensor grad;                      // d value / d prediction
  std::vector<double> weight_grad;  // d value / d w_i, filled when weights were given
};

/// sqrt(mean((pred - label)^2)) over the batch; pred is batch or batch x 1.
LossResult rul_rmse(const Tensor& pred, std::span<const double> label);
/// mean(|pred - label|), the literal per-sample reading of the RUL loss.
LossResult rul_mae(const Tensor& pred, std::span<const double> label);

/// Binary cross entropy on sigmoid outputs; labels must be 0 or 1.
LossResult bce(const Tensor& pred, std::span<const double> label,
               std::span<const double> weights = {}, Reduction reduction = Reduction::mean);

/// Categorical cross entropy on softmax outputs (batch x classes).
LossResult cross_entropy(const Tensor& probs, std::span<const int> label,
                         std::span<const double> weights = {},
                         Reduction reduction = Reduction::mean);

/// Dispatches on kind; ce labels are class indices stored as reals.
LossResult compute_loss(LossKind kind, const Tensor& pred, std::span<const double> label,
                        std::span<const double> weights = {},
                        Reduction reduction = Reduction::mean);

}  // namespace opsdann::nn
