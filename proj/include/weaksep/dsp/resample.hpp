#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "weaksep/dsp/waveform.hpp"
#include "weaksep/errors.hpp"

namespace weaksep::dsp {

/// Integer-factor decimation behind a Blackman-windowed sinc low-pass at 0.9x
/// the new Nyquist frequency.
inline Waveform decimate(const Waveform& w, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("decimate: factor must be positive");
  if (factor == 1) return w;
  constexpr std::size_t kHalfTaps = 24;
  const std::size_t half = kHalfTaps * factor;
  const double cutoff = 0.9 * 0.5 / static_cast<double>(factor);  // cycles per input sample
  std::vector<double> taps(2 * half + 1);
  double norm = 0.0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const double n = static_cast<double>(i) - static_cast<double>(half);
    const double sinc = n == 0.0 ? 2.0 * cutoff
                                 : std::sin(2.0 * std::numbers::pi * cutoff * n) / (std::numbers::pi * n);
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(taps.size() - 1);
    const double blackman = 0.42 - 0.5 * std::cos(phase) + 0.08 * std::cos(2.0 * phase);
    taps[i] = sinc * blackman;
    norm += taps[i];
  }
  for (double& t : taps) t /= norm;

  const std::size_t out_len = (w.size() + factor - 1) / factor;
  std::vector<double> out(out_len, 0.0);
  const auto len = static_cast<std::ptrdiff_t>(w.size());
  for (std::size_t m = 0; m < out_len; ++m) {
    const auto center = static_cast<std::ptrdiff_t>(m * factor);
    double acc = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
      const std::ptrdiff_t idx = center + static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(half);
      if (idx >= 0 && idx < len) acc += taps[i] * w.samples[static_cast<std::size_t>(idx)];
    }
    out[m] = acc;
  }
  return Waveform(std::move(out), w.sample_rate / static_cast<double>(factor));
}

/// Brings `w` to `target_rate`. Only integer down-sampling ratios are supported.
inline Waveform resample_to(const Waveform& w, double target_rate) {
  if (w.sample_rate == target_rate) return w;
  const double ratio = w.sample_rate / target_rate;
  const double rounded = std::round(ratio);
  if (ratio < 1.0 || std::abs(ratio - rounded) > 1e-9) {
    throw DataError("unsupported sample rate " + std::to_string(w.sample_rate) + " Hz (need an integer multiple of " +
                    std::to_string(target_rate) + " Hz)");
  }
  return decimate(w, static_cast<std::size_t>(rounded));
}

}  // namespace weaksep::dsp
