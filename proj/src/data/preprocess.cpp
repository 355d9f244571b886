#include "opsdann/data/preprocess.hpp"

#include <algorithm>
#include <limits>

#include "opsdann/data/decimate.hpp"
#include "opsdann/error.hpp"

namespace opsdann::data {

ScalerParams fit_scaler(std::span<const MultivariateSeries> source) {
  if (source.empty()) throw Error("fit_scaler: no source series");
  ScalerParams scaler;
  const std::size_t channels = source.front().channels();
  scaler.min.assign(channels, std::numeric_limits<double>::infinity());
  scaler.max.assign(channels, -std::numeric_limits<double>::infinity());
  for (const auto& s : source) {
    if (s.channels() != channels) throw Error("fit_scaler: channel count differs between units");
    for (std::size_t c = 0; c < channels; ++c) {
      const auto [lo, hi] = std::minmax_element(s.channel(c).begin(), s.channel(c).end());
      scaler.min[c] = std::min(scaler.min[c], *lo);
      scaler.max[c] = std::max(scaler.max[c], *hi);
    }
  }
  return scaler;
}

double scale_value(double x, double min, double max) {
  if (max == min) return 0.0;
  return 2.0 * (x - min) / (max - min) - 1.0;
}

void apply_scaler(MultivariateSeries& series, const ScalerParams& scaler) {
  if (scaler.min.size() != series.channels()) throw Error("apply_scaler: channel count mismatch");
  for (std::size_t c = 0; c < series.channels(); ++c) {
    for (double& v : series.channel(c)) v = scale_value(v, scaler.min[c], scaler.max[c]);
  }
}

std::vector<int> median_filter(std::span<const int> labels, int length) {
  if (length < 1 || length % 2 == 0) throw Error("median filter length must be odd and positive");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(labels.size());
  const std::ptrdiff_t half = length / 2;
  std::vector<int> out(labels.size());
  std::vector<int> window(static_cast<std::size_t>(length));
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const std::ptrdiff_t j = std::clamp<std::ptrdiff_t>(i + k, 0, n - 1);
      window[static_cast<std::size_t>(k + half)] = labels[static_cast<std::size_t>(j)];
    }
    std::nth_element(window.begin(), window.begin() + half, window.end());
    out[static_cast<std::size_t>(i)] = window[static_cast<std::size_t>(half)];
  }
  return out;
}

std::vector<Phase> label_phases(std::span<const double> altitude, std::span<const int> cycle_index,
                                double sample_rate_hz, double threshold, int median_length) {
  if (median_length < 1 || median_length % 2 == 0) throw Error("median filter length must be odd and positive");
  if (altitude.size() != cycle_index.size()) throw Error("label_phases: altitude and cycle index differ in length");
  if (!(sample_rate_hz > 0.0)) throw Error("label_phases: sample rate must be positive");
  const double dt = 1.0 / sample_rate_hz;
  std::vector<Phase> result(altitude.size(), Phase::steady);
  for (const auto& flight : flight_spans(cycle_index)) {
    const std::size_t len = flight.end - flight.begin;
    std::vector<int> raw(len, static_cast<int>(Phase::steady));
    for (std::size_t i = 0; i + 1 < len; ++i) {
      const double rate = (altitude[flight.begin + i + 1] - altitude[flight.begin + i]) / dt;
      Phase p = Phase::steady;
      if (rate >= threshold) {
        p = Phase::ascending;
      } else if (rate <= -threshold) {
        p = Phase::descending;
      }
      raw[i] = static_cast<int>(p);
    }
    if (len >= 2) raw[len - 1] = raw[len - 2];
    const auto smooth = median_filter(raw, median_length);
    for (std::size_t i = 0; i < len; ++i) result[flight.begin + i] = static_cast<Phase>(smooth[i]);
  }
  return result;
}

std::vector<Phase> label_phases(const MultivariateSeries& series, double threshold, int median_length) {
  return label_phases(series.altitude(), series.cycle_index, series.sample_rate_hz, threshold, median_length);
}

double normalized_rul(int cycle, int fault_onset_cycle, int eol_cycle, RulNormalization mode) {
  if (eol_cycle <= fault_onset_cycle) throw Error("RUL normalization needs eol > fault onset");
  const double remaining = static_cast<double>(eol_cycle - cycle);
  if (mode == RulNormalization::max_cycles) return remaining / static_cast<double>(eol_cycle);
  return remaining / static_cast<double>(eol_cycle - fault_onset_cycle);
}

std::vector<double> normalize_rul(const MultivariateSeries& series, RulNormalization mode) {
  std::vector<double> rul(series.length);
  for (std::size_t t = 0; t < series.length; ++t) {
    const int c = series.cycle_index[t];
    if (c < series.fault_onset_cycle || c > series.eol_cycle) {
      throw Error("unit '" + series.unit_id + "': cycle " + std::to_string(c) + " outside [onset, eol]");
    }
    rul[t] = normalized_rul(c, series.fault_onset_cycle, series.eol_cycle, mode);
  }
  return rul;
}

PreparedUnit prepare_unit(const MultivariateSeries& raw, const PrepOptions& options) {
  raw.validate();
  const auto raw_phases = label_phases(raw, options.phase_threshold, options.median_length);

  // Crop at the raw rate, carrying the labels along.
  std::vector<int> phase_ints;
  for (std::size_t t = 0; t < raw.length; ++t) {
    const int c = raw.cycle_index[t];
    if (c >= raw.fault_onset_cycle && c <= raw.eol_cycle) phase_ints.push_back(static_cast<int>(raw_phases[t]));
  }
  const auto cropped = crop_cycles(raw, raw.fault_onset_cycle, raw.eol_cycle);

  PreparedUnit unit;
  unit.series = decimate(cropped, options.decimation_factor, options.filter_order);
  for (int p : subsample<int>(phase_ints, options.decimation_factor)) unit.phase.push_back(static_cast<Phase>(p));
  unit.rul = normalize_rul(unit.series, options.rul_mode);
  unit.rul_span_cycles = options.rul_mode == RulNormalization::max_cycles
                             ? static_cast<double>(raw.eol_cycle)
                             : static_cast<double>(raw.eol_cycle - raw.fault_onset_cycle);
  return unit;
}

}  // namespace opsdann::data
