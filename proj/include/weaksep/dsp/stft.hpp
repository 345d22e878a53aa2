#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "weaksep/dsp/spectrogram.hpp"
#include "weaksep/dsp/waveform.hpp"

namespace weaksep::dsp {

inline constexpr std::size_t kWindowSize = 512;
inline constexpr std::size_t kHop = 256;

/// Periodic Hann window; sums to a constant at 50% overlap.
inline std::vector<double> hann_window(std::size_t size) {
  std::vector<double> w(size);
  for (std::size_t n = 0; n < size; ++n) {
    const double s = std::sin(std::numbers::pi * static_cast<double>(n) / static_cast<double>(size));
    w[n] = s * s;
  }
  return w;
}

inline std::size_t frame_count(std::size_t samples, std::size_t window_size, std::size_t hop) {
  if (samples < window_size) return 0;
  return (samples - window_size) / hop + 1;
}

/// Frames without padding or centering: frame t covers [t*hop, t*hop + window_size).
inline ComplexSpectrogram stft(const Waveform& w, std::size_t window_size = kWindowSize,
                               std::size_t hop = kHop) {
  if (window_size == 0 || window_size % 2 != 0) {
    throw std::invalid_argument("stft: window size must be even and positive");
  }
  if (hop != window_size / 2) throw std::invalid_argument("stft: hop must be half the window size");
  if (w.size() < window_size) throw std::invalid_argument("stft: input too short");

  const std::size_t frames = frame_count(w.size(), window_size, hop);
  ComplexSpectrogram out(frames, window_size, hop);
  const auto window = hann_window(window_size);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(window_size);
  std::vector<std::complex<double>> spectrum;
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t n = 0; n < window_size; ++n) frame[n] = w.samples[start + n] * window[n];
    fft.fwd(spectrum, frame);
    for (std::size_t f = 0; f < out.bins(); ++f) out.at(t, f) = spectrum[f];
  }
  return out;
}

/// Weighted overlap-add with a Hann synthesis window and per-sample
/// window-energy normalization. Samples whose accumulated window energy falls
/// below `kEnergyFloor` (the first and last few samples) are attenuated rather
/// than amplified.
inline Waveform istft(const ComplexSpectrogram& s, double sample_rate = kModelSampleRate) {
  s.check_consistent();
  constexpr double kEnergyFloor = 1e-3;
  const std::size_t window_size = s.window_size();
  const std::size_t hop = s.hop();
  if (s.frames() == 0) return Waveform({}, sample_rate);

  const std::size_t length = (s.frames() - 1) * hop + window_size;
  std::vector<double> acc(length, 0.0);
  std::vector<double> energy(length, 0.0);
  const auto window = hann_window(window_size);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> spectrum(s.bins());
  std::vector<double> frame;
  for (std::size_t t = 0; t < s.frames(); ++t) {
    for (std::size_t f = 0; f < s.bins(); ++f) spectrum[f] = s.at(t, f);
    fft.inv(frame, spectrum, window_size);
    const std::size_t start = t * hop;
    for (std::size_t n = 0; n < window_size; ++n) {
      acc[start + n] += frame[n] * window[n];
      energy[start + n] += window[n] * window[n];
    }
  }
  for (std::size_t n = 0; n < length; ++n) acc[n] /= std::max(energy[n], kEnergyFloor);
  return Waveform(std::move(acc), sample_rate);
}

}  // namespace weaksep::dsp
