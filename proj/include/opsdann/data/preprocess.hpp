#pragma once

#include <span>
#include <string>
#include <vector>

#include "opsdann/data/series.hpp"

namespace opsdann::data {

// ---------------------------------------------------------------------------
// Min-max scaling to [-1, 1]

struct ScalerParams {
  std::vector<double> min;
  std::vector<double> max;
  std::string fitted_on = "source";
};

/// Per-channel extremes over every timestep of the given (source) series.
ScalerParams fit_scaler(std::span<const MultivariateSeries> source);
/// x' = 2 (x - min) / (max - min) - 1, unclipped. Constant channels map to 0.
void apply_scaler(MultivariateSeries& series, const ScalerParams& scaler);
double scale_value(double x, double min, double max);

// ---------------------------------------------------------------------------
// Operation-phase labels from the altitude derivative

inline constexpr double kPhaseThresholdFtPerS = 0.5;
inline constexpr int kPhaseMedianLength = 51;

/// Labels one altitude trace. Within each flight (run of equal cycle numbers) the
/// derivative (alt[i+1] - alt[i]) / dt is thresholded (>= T ascending, <= -T descending,
/// otherwise steady); the flight's last sample repeats its predecessor's label. An
/// odd-length median filter with edge replication then smooths each flight.
std::vector<Phase> label_phases(std::span<const double> altitude, std::span<const int> cycle_index,
                                double sample_rate_hz, double threshold = kPhaseThresholdFtPerS,
                                int median_length = kPhaseMedianLength);

std::vector<Phase> label_phases(const MultivariateSeries& series, double threshold = kPhaseThresholdFtPerS,
                                int median_length = kPhaseMedianLength);

/// Running median with edge replication over integer labels; `length` must be odd.
std::vector<int> median_filter(std::span<const int> labels, int length);

// ---------------------------------------------------------------------------
// RUL normalization

enum class RulNormalization {
  onset_anchored,  // (eol - c) / (eol - onset): 1 at fault onset, 0 at EOL
  max_cycles,      // (eol - c) / eol
};

double normalized_rul(int cycle, int fault_onset_cycle, int eol_cycle,
                      RulNormalization mode = RulNormalization::onset_anchored);
/// Per-timestep labels for a series already restricted to cycles >= onset.
std::vector<double> normalize_rul(const MultivariateSeries& series,
                                  RulNormalization mode = RulNormalization::onset_anchored);

// ---------------------------------------------------------------------------
// Full per-unit preparation

struct PrepOptions {
  int decimation_factor = 10;
  int filter_order = 8;
  double phase_threshold = kPhaseThresholdFtPerS;
  int median_length = kPhaseMedianLength;
  RulNormalization rul_mode = RulNormalization::onset_anchored;
};

/// A unit after decimation, cropped to [onset, eol], with per-timestep labels.
struct PreparedUnit {
  MultivariateSeries series;
  std::vector<Phase> phase;
  std::vector<double> rul;  // normalized, one per timestep
  double rul_span_cycles = 0.0;  // eol - onset, for de-normalization
};

/// label phases at the raw rate -> crop to [onset, eol] -> decimate -> subsample labels
/// -> normalize RUL.
PreparedUnit prepare_unit(const MultivariateSeries& raw, const PrepOptions& options = {});

}  // namespace opsdann::data
