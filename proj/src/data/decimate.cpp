#include "opsdann/data/decimate.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "opsdann/error.hpp"

namespace opsdann::data {

std::vector<Biquad> chebyshev1_lowpass(int order, double ripple_db, double cutoff) {
  if (order < 2 || order % 2 != 0) throw Error("chebyshev1_lowpass: order must be even and >= 2");
  if (!(cutoff > 0.0 && cutoff < 1.0)) throw Error("chebyshev1_lowpass: cutoff must lie in (0,1)");
  if (!(ripple_db > 0.0)) throw Error("chebyshev1_lowpass: ripple must be positive");
  using cplx = std::complex<double>;
  const double pi = std::numbers::pi;

  // Analog prototype poles (unit cutoff).
  const double eps = std::sqrt(std::pow(10.0, 0.1 * ripple_db) - 1.0);
  const double mu = std::asinh(1.0 / eps) / order;
  // Bilinear transform at fs = 2 with the cutoff prewarped.
  const double fs2 = 4.0;
  const double warped = fs2 * std::tan(pi * cutoff / 2.0);

  std::vector<cplx> poles;
  for (int k = 0; k < order / 2; ++k) {
    // upper-half-plane member of each conjugate pair
    const double theta = pi * (2.0 * k + 1.0) / (2.0 * order);
    const cplx analog(-std::sinh(mu) * std::sin(theta), std::cosh(mu) * std::cos(theta));
    const cplx scaled = analog * warped;
    poles.push_back((fs2 + scaled) / (fs2 - scaled));
  }
  std::sort(poles.begin(), poles.end(), [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });

  std::vector<Biquad> sections;
  for (const auto& p : poles) {
    const double a1 = -2.0 * p.real();
    const double a2 = std::norm(p);
    // zeros at z = -1 (numerator 1 + 2 z^-1 + z^-2), DC gain normalized to one
    const double g = (1.0 + a1 + a2) / 4.0;
    sections.push_back({g, 2.0 * g, g, a1, a2});
  }
  return sections;
}

double magnitude_response(std::span<const Biquad> sections, double frequency) {
  using cplx = std::complex<double>;
  const cplx z1 = std::polar(1.0, -std::numbers::pi * frequency);
  const cplx z2 = z1 * z1;
  cplx h = 1.0;
  for (const auto& s : sections) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return std::abs(h);
}

namespace {

// In-place cascade filtering starting from the steady state of a constant input `level`.
void sosfilt(std::span<const Biquad> sections, std::vector<double>& x, double level) {
  for (const auto& s : sections) {
    // unit DC gain: steady state for constant input v is z1 = v (1 - b0), z2 = v (b2 - a2)
    double z1 = level * (1.0 - s.b0);
    double z2 = level * (s.b2 - s.a2);
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace

std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> signal,
                             std::size_t pad) {
  const std::size_t n = signal.size();
  if (n == 0) return {};
  pad = std::min(pad, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

  sosfilt(sections, ext, ext.front());
  std::reverse(ext.begin(), ext.end());
  sosfilt(sections, ext, ext.front());
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> decimate_signal(std::span<const double> signal, int factor, int order) {
  if (factor < 1) throw Error("decimation factor must be at least 1");
  if (signal.size() <= static_cast<std::size_t>(order) * static_cast<std::size_t>(factor)) {
    throw Error("series too short to decimate: " + std::to_string(signal.size()) + " samples, need more than " +
                std::to_string(order * factor));
  }
  if (factor == 1) return {signal.begin(), signal.end()};
  const auto sections = chebyshev1_lowpass(order, kDecimationRippleDb, kDecimationCutoff / factor);
  const auto filtered = filtfilt(sections, signal, static_cast<std::size_t>(3 * order * factor));
  return subsample<double>(filtered, factor);
}

MultivariateSeries decimate(const MultivariateSeries& series, int factor, int order) {
  if (series.length <= static_cast<std::size_t>(order) * static_cast<std::size_t>(factor)) {
    throw Error("unit '" + series.unit_id + "': series too short to decimate (" +
                std::to_string(series.length) + " samples)");
  }
  MultivariateSeries out = series;
  out.cycle_index = subsample<int>(series.cycle_index, factor);
  out.length = out.cycle_index.size();
  out.sample_rate_hz = series.sample_rate_hz / factor;
  out.values.clear();
  out.values.reserve(series.channels() * out.length);
  for (std::size_t c = 0; c < series.channels(); ++c) {
    const auto reduced = decimate_signal(series.channel(c), factor, order);
    out.values.insert(out.values.end(), reduced.begin(), reduced.end());
  }
  return out;
}

}  // namespace opsdann::data
