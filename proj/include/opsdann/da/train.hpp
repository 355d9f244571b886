#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <ostream>
#include <vector>

#include "json.hpp"
#include "opsdann/da/model.hpp"
#include "opsdann/data/windows.hpp"
#include "opsdann/nn/loss.hpp"

namespace opsdann::da {

struct MmdConfig {
  std::vector<double> bandwidths{0.01, 0.1, 1.0, 10.0, 100.0};
};

struct MmdResult {
  double value = 0.0;
  nn::Tensor grad_source;  // d value / d source features
  nn::Tensor grad_target;
};

/// Biased multi-kernel MMD^2 between two feature batches (n x d and m x d) with
/// k(a, b) = sum_g exp(-g |a - b|^2).
MmdResult compute_mk_mmd(const nn::Tensor& source, const nn::Tensor& target, const MmdConfig& config);

/// Where the per-phase weights of the soft variant come from.
enum class SoftWeights {
  classifier,  // predicted phase probabilities
  oracle,      // one-hot of the labeled phases
  uniform,     // 1 / n_p for every head
};

struct TrainConfig {
  Method method = Method::source_only;
  int epochs = 15;
  std::size_t batch_size = 256;
  double alpha0 = 0.01;
  double momentum = 0.9;
  double lambda_d = 1.0;  // adversarial / MMD trade-off
  double lambda_z = 1.0;  // phase-classifier trade-off
  std::uint64_t seed = 0;
  int n_phases = 3;
  nn::LossKind rul_loss = nn::LossKind::rul_rmse;
  // soft variant
  bool detach_soft_weights = true;
  bool phase_classifier_on_target = true;
  SoftWeights soft_weights = SoftWeights::classifier;
  /// Replaces the reversal ramp with a constant.
  std::optional<double> fixed_rho;
  /// Stop after this many optimizer steps (progress still uses the planned total).
  std::optional<std::size_t> max_steps;
  MmdConfig mmd;
};

nlohmann::json to_json(const TrainConfig& config);
/// Overrides the keys present in `j` on top of `base`; unknown keys throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Per-step losses. `head_losses` holds one entry per discriminator head.
struct StepRecord {
  int epoch = 0;
  std::size_t step = 0;
  double progress = 0.0;
  double rho = 0.0;
  double lr = 0.0;
  double rul_loss = 0.0;
  double domain_loss = 0.0;
  double phase_loss = 0.0;
  double mmd = 0.0;
  std::vector<double> head_losses;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double rho = 0.0;  // at the last step of the epoch
  double rul_loss = 0.0;
  double domain_loss = 0.0;
  double phase_loss = 0.0;
  double mmd = 0.0;
};

struct TrainResult {
  ModelBundle model;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

/// One forward/backward pass on the given source and target rows: gradients are zeroed,
/// then accumulated; no update is applied. `rho` scales the reversed adversarial gradient,
/// so rho = -1 yields the plain gradient of total_loss().
StepRecord compute_gradients(ModelBundle& model, const TrainConfig& config, const data::WindowDataset& source,
                             const data::WindowDataset* target, std::span<const std::size_t> source_rows,
                             std::span<const std::size_t> target_rows, double rho);
/// rul + lambda_d (domain + mmd) + lambda_z phase
double total_loss(const StepRecord& record, const TrainConfig& config);

/// Trains the configured method. `target` must be unlabeled; it is ignored by the
/// source-only method and only used for normalization statistics by AdaBN. When
/// `initial` is given it replaces the freshly built model.
TrainResult train(const TrainConfig& config, const data::WindowDataset& source,
                  const data::WindowDataset* target = nullptr, const ModelBundle* initial = nullptr);

/// Replaces every batch-norm layer's running statistics of the feature extractor by
/// the exact per-channel mean and (biased) variance over all target windows, layer
/// by layer. No weight changes.
void adapt_batchnorm(ModelBundle& model, const data::WindowDataset& target, std::size_t batch_size = 256);

/// Sigmoid regressor output per window, in eval mode.
std::vector<double> predict_rul(const ModelBundle& model, const data::WindowDataset& windows,
                                std::size_t batch_size = 1024);
/// Feature-extractor outputs (n x 50) for the selected windows.
nn::Tensor embed(const ModelBundle& model, const data::WindowDataset& windows,
                 std::span<const std::size_t> indices, std::size_t batch_size = 1024);

/// Writes per-epoch records: epoch,lr,rho,rul_loss,domain_loss,phase_loss,mmd
void write_trace_csv(std::ostream& out, const std::vector<EpochRecord>& epochs);

}  // namespace opsdann::da
