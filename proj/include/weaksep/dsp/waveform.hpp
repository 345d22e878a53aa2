#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "weaksep/errors.hpp"

namespace weaksep::dsp {

inline constexpr double kModelSampleRate = 8000.0;

struct Waveform {
  std::vector<double> samples;
  double sample_rate = kModelSampleRate;

  Waveform() = default;
  Waveform(std::vector<double> s, double rate) : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

inline double rms(const Waveform& w) {
  if (w.empty()) return 0.0;
  double acc = 0.0;
  for (double x : w.samples) acc += x * x;
  return std::sqrt(acc / static_cast<double>(w.size()));
}

/// Scales `w` so that its RMS equals `target`.
inline Waveform rms_normalize(const Waveform& w, double target) {
  if (!(target > 0.0) || !std::isfinite(target)) {
    throw std::invalid_argument("rms_normalize: target must be positive and finite");
  }
  const double current = rms(w);
  if (!(current > 0.0)) throw DataError("silent recording");
  const double gain = target / current;
  Waveform out = w;
  for (double& x : out.samples) x *= gain;
  return out;
}

/// Zero-pads at the end or truncates to exactly `length` samples.
inline Waveform fit_length(const Waveform& w, std::size_t length) {
  Waveform out = w;
  out.samples.resize(length, 0.0);
  return out;
}

inline bool all_finite(const Waveform& w) {
  for (double x : w.samples) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace weaksep::dsp
