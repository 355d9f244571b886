#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace opsdann::nn {

/// One block of inputs to perturb together with the analytic gradient the caller computed.
struct GradProbe {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_entry;
  std::size_t entries_checked = 0;
};

/// Central differences of `loss` w.r.t. every probed entry, compared against the analytic
/// gradient. Relative error is |a - n| / max(|a|, |n|, floor).
///
/// `max_per_probe` > 0 limits each probe to an evenly strided subset of its entries.
/// Values are restored exactly after each perturbation.
GradCheckReport finite_difference_check(const std::function<double()>& loss,
                                        std::span<const GradProbe> probes, double epsilon = 1e-6,
                                        std::size_t max_per_probe = 0, double floor = 1e-6);

}  // namespace opsdann::nn
