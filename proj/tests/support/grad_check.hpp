#pragma once

// Central finite-difference oracle used by the gradient-fidelity tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace weaksep::oracle {

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst_rel = 0.0;
  std::string first_failure;
  bool ok() const { return failures == 0 && checked > 0; }
};

inline bool grad_close(double analytic, double numeric, double rel_tol = 1e-4, double abs_floor = 1e-6) {
  const double diff = std::abs(analytic - numeric);
  return diff <= abs_floor || diff <= rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

/// Perturbs each entry of `values` by +-h and compares the central difference
/// of `loss` with `analytic`. `values` is restored afterwards.
inline void check_entries(std::span<double> values, std::span<const double> analytic,
                          const std::function<double()>& loss, const std::string& label, GradCheckResult& result,
                          double h = 1e-5, std::size_t stride = 1) {
  for (std::size_t i = 0; i < values.size(); i += stride) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss();
    values[i] = saved - h;
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    ++result.checked;
    const double diff = std::abs(analytic[i] - numeric);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-300});
    if (diff > 1e-6) result.worst_rel = std::max(result.worst_rel, diff / scale);
    if (!grad_close(analytic[i], numeric)) {
      if (result.failures++ == 0) {
        result.first_failure = label + "[" + std::to_string(i) + "]: analytic " + std::to_string(analytic[i]) +
                               " vs numeric " + std::to_string(numeric);
      }
    }
  }
}

}  // namespace weaksep::oracle
