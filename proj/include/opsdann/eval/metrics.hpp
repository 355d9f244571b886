#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "opsdann/data/windows.hpp"
#include "opsdann/nn/tensor.hpp"

namespace opsdann::eval {

/// sqrt(mean((pred - truth)^2)); throws on empty or mismatched input.
double rmse(std::span<const double> pred, std::span<const double> truth);

struct NasaScore {
  double total = 0.0;  // sum exp(a |d|), a = 1/10 for d >= 0 else 1/13
  double mean = 0.0;   // total / n
};
/// Errors d = pred - truth in cycles. A perfect prediction scores 1 per sample.
NasaScore nasa_score(std::span<const double> pred, std::span<const double> truth);

// ---------------------------------------------------------------------------
// Proxy A-distance

struct PadConfig {
  std::size_t hidden = 30;
  int epochs = 200;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 256;
  double train_fraction = 0.8;
  int repeats = 5;  // independent probes; the median is reported
  std::uint64_t seed = 0;
  std::size_t min_per_domain = 10;
};

/// 2 (1 - 2 eps) clamped to [0, 2].
double pad_from_error(double error);

struct PadResult {
  double pad = 0.0;             // median over repeats
  std::vector<double> errors;   // held-out balanced error per repeat
  std::vector<double> pads;     // per repeat
};

/// Trains fresh probes (d -> hidden ReLU -> 1 sigmoid) to tell source (0) from target (1)
/// embeddings on a stratified split, with class-weighted loss, and converts the
/// held-out balanced error rate to a distance.
PadResult proxy_a_distance(const nn::Tensor& source, const nn::Tensor& target, const PadConfig& config = {});

// ---------------------------------------------------------------------------
// PCA

struct PcaResult {
  nn::Tensor projected;                  // n x k
  nn::Tensor components;                 // k x d, orthonormal rows (zero rows past the rank)
  std::vector<double> mean;              // d
  std::vector<double> explained_variance;  // k, non-increasing
  std::size_t rank = 0;                  // numerical rank, capped at k
};

/// Projects centered data onto the top-k covariance eigenvectors. Each component is
/// signed so that its largest-magnitude entry is positive. When the data has rank
/// below k the missing components and coordinates are zero.
PcaResult pca_project(const nn::Tensor& x, std::size_t k = 2);

/// Mean silhouette coefficient of the labeling under Euclidean distance. Points in
/// singleton clusters score 0. Requires at least two distinct labels.
double silhouette(const nn::Tensor& points, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Reports

struct TracePoint {
  std::string unit_id;
  int cycle = 0;
  double truth = 0.0;      // normalized RUL
  double predicted = 0.0;
};

struct MetricsReport {
  double rmse_norm = 0.0;
  double rmse_cycles = 0.0;
  NasaScore nasa;
  std::optional<double> pad;
  std::optional<double> phase_silhouette;  // of phase labels in the 2-D embedding projection
  std::size_t windows = 0;
  std::vector<TracePoint> traces;  // grouped by unit, sorted by cycle within a unit
};

/// Scores predictions against a labeled window set. Cycle errors use each unit's
/// onset-to-EOL span.
MetricsReport evaluate_predictions(const data::WindowDataset& labeled, std::span<const double> predictions);

nlohmann::json to_json(const MetricsReport& report);

/// Header: method,seed,rmse_cycles,rmse_norm,nasa_mean,nasa_total,pad,silhouette,windows
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const std::string& method, std::uint64_t seed, const MetricsReport& report);
/// unit_id,cycle,rul_true,rul_pred
void write_traces_csv(std::ostream& out, const std::vector<TracePoint>& traces);
/// x1,x2,domain,phase
void write_projection_csv(std::ostream& out, const PcaResult& pca, std::span<const data::Domain> domains,
                          std::span<const data::Phase> phases);

/// %.17g, so a value round-trips exactly through text.
std::string format_real(double value);

}  // namespace opsdann::eval
