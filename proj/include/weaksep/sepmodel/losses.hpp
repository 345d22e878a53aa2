#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "weaksep/dsp/spectrogram.hpp"
#include "weaksep/errors.hpp"

namespace weaksep::sepmodel {

/// Floor applied to the estimate inside the logarithm of the divergence.
inline constexpr double kGklFloor = 1e-8;

/// Generalized KL divergence sum_i a_i log(a_i / b_i) - a_i + b_i with the
/// convention 0 log 0 = 0.
template <class A, class B>
double gkl(std::span<const A> target, std::span<const B> estimate) {
  if (target.size() != estimate.size()) {
    throw ShapeError("gkl: " + std::to_string(target.size()) + " targets vs " + std::to_string(estimate.size()) +
                     " estimates");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double a = target[i];
    const double b = estimate[i];
    if (a < 0.0 || b < 0.0) throw std::invalid_argument("gkl: negative entries");
    if (a > 0.0) acc += a * std::log(a / std::max(b, kGklFloor)) - a;
    acc += b;
  }
  return acc;
}

inline double gkl(const dsp::Spectrogram& target, const dsp::Spectrogram& estimate) {
  if (!target.same_shape(estimate)) throw ShapeError("gkl: spectrogram shapes differ");
  return gkl(target.values(), estimate.values());
}

/// d gkl / d estimate, scaled by `scale` and written into `out`.
template <class A, class B, class G>
void gkl_gradient(std::span<const A> target, std::span<const B> estimate, double scale, std::span<G> out) {
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double b = estimate[i];
    const double ratio = b > kGklFloor ? target[i] / b : 0.0;
    out[i] = static_cast<G>(scale * (1.0 - ratio));
  }
}

/// KL(N(mu, exp(log_var)) || N(0, 1)) summed over latent units:
/// -1/2 sum (1 + log_var - mu^2 - exp(log_var)).
template <class T>
double gaussian_kl(std::span<const T> mu, std::span<const T> log_var) {
  if (mu.size() != log_var.size()) throw ShapeError("gaussian_kl: mu and log_var differ in length");
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu[i], lv = log_var[i];
    if (!std::isfinite(m) || !std::isfinite(lv)) throw DivergenceError("gaussian_kl: non-finite posterior parameter");
    acc += 1.0 + lv - m * m - std::exp(lv);
  }
  return -0.5 * acc;
}

inline double gaussian_kl(const std::vector<double>& mu, const std::vector<double>& log_var) {
  return gaussian_kl(std::span<const double>(mu), std::span<const double>(log_var));
}

template <class T>
void gaussian_kl_gradient(std::span<const T> mu, std::span<const T> log_var, double scale, std::span<T> grad_mu,
                          std::span<T> grad_log_var) {
  for (std::size_t i = 0; i < mu.size(); ++i) {
    grad_mu[i] = static_cast<T>(scale * mu[i]);
    grad_log_var[i] = static_cast<T>(scale * 0.5 * (std::exp(static_cast<double>(log_var[i])) - 1.0));
  }
}

/// Class-gated sum of per-class estimates.
inline dsp::Spectrogram mix_estimate(const std::vector<dsp::Spectrogram>& estimates, const std::vector<int>& h) {
  if (estimates.size() != h.size()) {
    throw ShapeError("mix_estimate: " + std::to_string(estimates.size()) + " estimates vs " +
                     std::to_string(h.size()) + " labels");
  }
  if (estimates.empty()) throw std::invalid_argument("mix_estimate: no estimates");
  dsp::Spectrogram out(estimates.front().frames(), estimates.front().bins());
  auto dst = out.values();
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    if (!estimates[k].same_shape(out)) throw ShapeError("mix_estimate: estimates differ in shape");
    if (h[k] == 0) continue;
    const auto src = estimates[k].values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return out;
}

}  // namespace weaksep::sepmodel
