#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "weaksep/dsp/waveform.hpp"
#include "weaksep/errors.hpp"

namespace weaksep::evaluation {

/// Energies at or below this fraction of the estimate's energy count as exactly zero.
inline constexpr double kZeroEnergy = 1e-20;

/// estimate = s_target + e_interf + e_artif with instantaneous (length-1) projections.
struct Decomposition {
  std::vector<double> s_target;
  std::vector<double> e_interf;
  std::vector<double> e_artif;
};

struct Metrics {
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double energy(const std::vector<double>& a) { return dot(a, a); }

}  // namespace detail

/// Splits `estimate` into its projection on the target reference, the further
/// projection on the span of all references, and the remainder.
inline Decomposition decompose(const dsp::Waveform& estimate, const std::vector<dsp::Waveform>& references,
                               std::size_t target) {
  if (references.empty()) throw std::invalid_argument("decompose: no references");
  if (target >= references.size()) throw std::invalid_argument("decompose: target index out of range");
  const std::size_t n = estimate.size();
  const std::size_t k = references.size();
  for (const auto& r : references) {
    if (r.size() != n) throw ShapeError("decompose: reference length differs from estimate length");
    if (!(detail::energy(r.samples) > 0.0)) throw std::invalid_argument("decompose: zero-energy reference");
  }
  const auto& e = estimate.samples;
  const auto& t = references[target].samples;

  Decomposition d;
  const double a = detail::dot(e, t) / detail::energy(t);
  d.s_target.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.s_target[i] = a * t[i];

  Eigen::MatrixXd gram(k, k);
  Eigen::VectorXd rhs(k);
  for (std::size_t p = 0; p < k; ++p) {
    rhs(static_cast<Eigen::Index>(p)) = detail::dot(references[p].samples, e);
    for (std::size_t q = 0; q < k; ++q)
      gram(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) =
          detail::dot(references[p].samples, references[q].samples);
  }
  const Eigen::VectorXd coef = gram.colPivHouseholderQr().solve(rhs);
  std::vector<double> all(n, 0.0);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < n; ++i) all[i] += coef(static_cast<Eigen::Index>(p)) * references[p].samples[i];
  d.e_interf.resize(n);
  d.e_artif.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.e_interf[i] = all[i] - d.s_target[i];
    d.e_artif[i] = e[i] - all[i];
  }
  return d;
}

/// 10 log10(num / den) with zero denominators giving +inf and zero numerators -inf.
inline double ratio_db(double num, double den, double zero) {
  if (!std::isfinite(num) || !std::isfinite(den)) throw std::invalid_argument("metrics: non-finite energy");
  if (num <= zero) return -std::numeric_limits<double>::infinity();
  if (den <= zero) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(num / den);
}

inline Metrics metrics(const Decomposition& d) {
  const std::size_t n = d.s_target.size();
  std::vector<double> distortion(n), target_plus_interf(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    distortion[i] = d.e_interf[i] + d.e_artif[i];
    target_plus_interf[i] = d.s_target[i] + d.e_interf[i];
    const double e = target_plus_interf[i] + d.e_artif[i];
    total += e * e;
  }
  const double zero = kZeroEnergy * total;
  const double st = detail::energy(d.s_target);
  Metrics m;
  m.sdr = ratio_db(st, detail::energy(distortion), zero);
  m.sir = ratio_db(st, detail::energy(d.e_interf), zero);
  m.sar = ratio_db(detail::energy(target_plus_interf), detail::energy(d.e_artif), zero);
  return m;
}

inline Metrics evaluate(const dsp::Waveform& estimate, const std::vector<dsp::Waveform>& references, std::size_t target) {
  return metrics(decompose(estimate, references, target));
}

}  // namespace weaksep::evaluation
