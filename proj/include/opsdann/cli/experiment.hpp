#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "opsdann/da/train.hpp"
#include "opsdann/data/preprocess.hpp"
#include "opsdann/data/windows.hpp"
#include "opsdann/eval/metrics.hpp"
#include "opsdann/synth/flights.hpp"

namespace opsdann::cli {

inline constexpr std::string_view kVersion = "0.1.0";

/// The three transfer directions between flight classes, or explicit CSV files.
enum class Task { s2m, s2l, m2l, custom };

std::string_view task_name(Task task);  // "S2M", "S2L", "M2L", "custom"
/// Accepts S2M / S->M / S→M (any case) and "custom".
Task parse_task(std::string_view name);
synth::FlightClass source_class(Task task);
synth::FlightClass target_class(Task task);

struct DataConfig {
  bool synthetic = true;
  std::uint64_t seed = 0;         // fleet generation seed
  std::size_t units_per_class = 5;
  synth::DegradationSpec degradation = synth::DegradationSpec::preset();
  nlohmann::json flight_overrides = nlohmann::json::object();  // {"short": {...}, ...}
  std::filesystem::path source_csv, target_csv;               // custom task
  std::size_t train_stride = 4;   // window stride for the training sets
  std::size_t eval_stride = 1;    // window stride for target evaluation
};

struct EvalConfig {
  /// Last k target units are withheld from training and are the only ones scored.
  std::size_t held_out_units = 0;
  eval::PadConfig pad;
  std::size_t pad_samples = 1000;  // per domain, evenly spaced
  std::size_t pca_samples = 1000;  // per domain
  bool pad_enabled = true;
};

/// Per-method optimizer and trade-off settings from a grid search on the synthetic S2L
/// task (a tuning fleet distinct from the default data seed); used for every task.
da::TrainConfig tuned_train_config(da::Method method);

struct ExperimentConfig {
  Task task = Task::s2l;
  DataConfig data;
  da::TrainConfig train = tuned_train_config(da::Method::source_only);
  /// Set when epochs were given explicitly; otherwise the per-task default applies.
  bool epochs_explicit = false;
  EvalConfig eval;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output;  // relative paths resolve against the output root
  int jobs = 1;
};

/// Default experiment for a task and method: synthetic data, tuned training settings.
ExperimentConfig make_config(Task task, da::Method method);

/// Epoch budget per task: 15 for S2L and M2L, 25 for S2M; the source-only baseline uses
/// 40 from short flights and 20 from medium ones.
int default_epochs(Task task, da::Method method);
/// Epochs that will actually be used.
int effective_epochs(const ExperimentConfig& config);

nlohmann::json to_json(const ExperimentConfig& config);
/// Reads a config object (or a manifest carrying one under "config"). Training fields
/// start from tuned_train_config() of the chosen method. Unknown keys and bad values
/// throw ConfigError naming the field path.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Parses "0..4", "1,3,7" or a single number.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 14695981039346656037ull);
std::string hex64(std::uint64_t value);

/// $OPSDANN_OUTPUT_ROOT if set, else "runs".
std::filesystem::path output_root();
std::filesystem::path resolve_output(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Data

struct TaskData {
  std::vector<data::PreparedUnit> source_units, target_units;  // scaled
  data::ScalerParams scaler;
  data::WindowDataset source;        // labeled, training stride
  data::WindowDataset target_train;  // unlabeled, training stride
  data::WindowDataset target_eval;   // labeled, evaluation only
  std::uint64_t hash = 0;            // over the scaled unit data and labels
};

/// Generates or loads both domains, prepares every unit, fits the scaler on the
/// source and builds the window sets.
TaskData load_task_data(const ExperimentConfig& config);

/// Writes scaler.json and the window sets (source.bin, target.bin, target_eval.bin).
void write_prepared(const TaskData& data, const std::filesystem::path& directory);

// ---------------------------------------------------------------------------
// Runs

struct SeedResult {
  std::uint64_t seed = 0;
  eval::MetricsReport report;
};

struct RunSummary {
  std::filesystem::path directory;
  std::vector<SeedResult> seeds;
};

/// Trains and evaluates every seed, writing:
///   manifest.json, metrics.csv, summary.json
///   seed-<n>/{model.bin, trace.csv, predictions.csv, projection.csv, metrics.json}
RunSummary run_experiment(const ExperimentConfig& config);

/// Trains one seed and evaluates it on the target windows.
SeedResult run_seed(const ExperimentConfig& config, const TaskData& data, std::uint64_t seed,
                    const std::filesystem::path& seed_dir);

/// Config recorded in a finished run's manifest.
ExperimentConfig run_config(const std::filesystem::path& run_dir);
/// Model saved by run_seed() for `seed` in a finished run.
da::ModelBundle load_seed_model(const std::filesystem::path& run_dir, const ExperimentConfig& config,
                                std::uint64_t seed);

/// Indices i * n / m for i < m, m = min(count, n).
std::vector<std::size_t> evenly_spaced(std::size_t n, std::size_t count);

/// Embeddings of evenly spaced windows from both sets, with domain and phase tags.
struct EmbeddingSample {
  nn::Tensor source, target;
  std::vector<data::Domain> domains;  // pooled order: source rows then target rows
  std::vector<data::Phase> phases;
};
EmbeddingSample sample_embeddings(const da::ModelBundle& model, const data::WindowDataset& source,
                                  const data::WindowDataset& target, std::size_t per_domain);
/// PCA of the pooled sample plus the silhouette of its phase labels in that plane.
struct Projection {
  eval::PcaResult pca;
  double phase_silhouette = 0.0;
};
Projection project(const EmbeddingSample& sample);

/// Aggregates finished runs: median and interquartile range per method, relative RMSE
/// improvement over the source-only run when one is present. Runs must share a data hash.
struct CompareRow {
  std::string method;
  std::size_t seeds = 0;
  double rmse_median = 0.0, rmse_q1 = 0.0, rmse_q3 = 0.0;
  double nasa_median = 0.0, nasa_q1 = 0.0, nasa_q3 = 0.0;
  std::optional<double> pad_median;
  std::optional<double> silhouette_median;
  std::optional<double> improvement;  // 1 - rmse / rmse(source-only), medians
};
std::vector<CompareRow> compare_runs(const std::vector<std::filesystem::path>& run_dirs);
/// method,seeds,rmse_median,rmse_q1,rmse_q3,nasa_median,nasa_q1,nasa_q3,pad_median,silhouette_median,improvement_vs_source_only
void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows);

/// Quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

}  // namespace opsdann::cli
