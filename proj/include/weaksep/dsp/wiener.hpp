#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "weaksep/dsp/spectrogram.hpp"
#include "weaksep/dsp/stft.hpp"

namespace weaksep::dsp {

/// Soft masks S_t^2 / sum_c S_c^2, one per component, flattened like the
/// spectrogram grid. Bins where every estimate is zero get 1/C per component.
inline std::vector<std::vector<double>> wiener_masks(const std::vector<Spectrogram>& estimates) {
  if (estimates.empty()) throw std::invalid_argument("wiener_masks: no estimates");
  const auto& first = estimates.front();
  for (const auto& e : estimates) {
    if (!e.same_shape(first)) throw ShapeError("wiener_masks: estimates differ in shape");
  }
  const std::size_t count = estimates.size();
  const std::size_t size = first.size();
  std::vector<std::vector<double>> masks(count, std::vector<double>(size));
  for (std::size_t i = 0; i < size; ++i) {
    double denom = 0.0;
    for (const auto& e : estimates) {
      const double v = e.values()[i];
      denom += v * v;
    }
    for (std::size_t c = 0; c < count; ++c) {
      if (denom > 0.0) {
        const double v = estimates[c].values()[i];
        masks[c][i] = v * v / denom;
      } else {
        masks[c][i] = 1.0 / static_cast<double>(count);
      }
    }
  }
  return masks;
}

/// Applies a real mask to the complex mixture grid, keeping the mixture phase.
inline ComplexSpectrogram apply_mask(const ComplexSpectrogram& mixture, const std::vector<double>& mask) {
  if (mask.size() != mixture.values().size()) throw ShapeError("apply_mask: mask size mismatch");
  ComplexSpectrogram out = mixture;
  auto values = out.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] *= mask[i];
  return out;
}

inline std::vector<Waveform> wiener_reconstruct(const std::vector<Spectrogram>& estimates,
                                                const ComplexSpectrogram& mixture,
                                                double sample_rate = kModelSampleRate) {
  if (estimates.empty()) throw std::invalid_argument("wiener_reconstruct: no estimates");
  for (const auto& e : estimates) {
    if (e.frames() != mixture.frames() || e.bins() != mixture.bins()) {
      throw ShapeError("wiener_reconstruct: estimate is " + std::to_string(e.frames()) + "x" +
                       std::to_string(e.bins()) + ", mixture is " + std::to_string(mixture.frames()) +
                       "x" + std::to_string(mixture.bins()));
    }
  }
  const auto masks = wiener_masks(estimates);
  std::vector<Waveform> out;
  out.reserve(masks.size());
  for (const auto& mask : masks) out.push_back(istft(apply_mask(mixture, mask), sample_rate));
  return out;
}

}  // namespace weaksep::dsp
