#pragma once

#include <array>
#include <span>
#include <vector>

#include "opsdann/data/series.hpp"

namespace opsdann::data {

/// Biquad in transposed direct form II: b0 b1 b2 / 1 a1 a2.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

/// Digital Chebyshev type-I low-pass as cascaded biquads (bilinear transform with
/// prewarping). `cutoff` is relative to Nyquist, in (0,1). Each section is scaled to
/// unit gain at DC, so the cascade passes constants exactly.
std::vector<Biquad> chebyshev1_lowpass(int order, double ripple_db, double cutoff);

/// Magnitude response at `frequency` (relative to Nyquist).
double magnitude_response(std::span<const Biquad> sections, double frequency);

/// Zero-phase forward-backward filtering with odd extension of `pad` samples at each
/// end and steady-state initial conditions.
std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> signal,
                             std::size_t pad);

inline constexpr double kDecimationRippleDb = 0.05;
inline constexpr double kDecimationCutoff = 0.8;  // fraction of the decimated Nyquist

/// Anti-aliased decimation of one signal: filtfilt then keep every factor-th sample.
std::vector<double> decimate_signal(std::span<const double> signal, int factor = 10, int order = 8);

/// Decimates every channel and the cycle index; the output rate is rate / factor.
/// Requires length > order * factor.
MultivariateSeries decimate(const MultivariateSeries& series, int factor = 10, int order = 8);

/// Indices retained by decimation: 0, factor, 2 factor, ...
template <typename T>
std::vector<T> subsample(std::span<const T> values, int factor) {
  std::vector<T> out;
  out.reserve(values.size() / factor + 1);
  for (std::size_t i = 0; i < values.size(); i += factor) out.push_back(values[i]);
  return out;
}

}  // namespace opsdann::data
