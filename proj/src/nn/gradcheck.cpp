#include "opsdann/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "opsdann/error.hpp"

namespace opsdann::nn {

GradCheckReport finite_difference_check(const std::function<double()>& loss,
                                        std::span<const GradProbe> probes, double epsilon,
                                        std::size_t max_per_probe, double floor) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw Error("finite difference epsilon must lie in [1e-7, 1e-3]");
  GradCheckReport report;
  for (const auto& probe : probes) {
    if (probe.values.size() != probe.analytic.size()) {
      throw Error("gradient probe '" + probe.name + "' has mismatched analytic gradient");
    }
    const std::size_t n = probe.values.size();
    const std::size_t stride = (max_per_probe == 0 || n <= max_per_probe) ? 1 : (n + max_per_probe - 1) / max_per_probe;
    for (std::size_t i = 0; i < n; i += stride) {
      const double original = probe.values[i];
      probe.values[i] = original + epsilon;
      const double up = loss();
      probe.values[i] = original - epsilon;
      const double down = loss();
      probe.values[i] = original;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = probe.analytic[i];
      const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / scale;
      ++report.entries_checked;
      if (rel > report.max_relative_error || std::isnan(rel)) {
        report.max_relative_error = std::isnan(rel) ? INFINITY : rel;
        report.worst_entry = probe.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace opsdann::nn
