#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "weaksep/errors.hpp"

namespace weaksep::dsp {

/// Non-negative magnitude grid, row-major with time as the slow axis.
class Spectrogram {
 public:
  Spectrogram() = default;
  Spectrogram(std::size_t frames, std::size_t bins)
      : frames_(frames), bins_(bins), mags_(frames * bins, 0.0f) {}

  /// Validating constructor; rejects negative or non-finite entries.
  Spectrogram(std::size_t frames, std::size_t bins, std::vector<float> mags)
      : frames_(frames), bins_(bins), mags_(std::move(mags)) {
    if (mags_.size() != frames_ * bins_) {
      throw ShapeError("Spectrogram: expected " + std::to_string(frames_ * bins_) +
                       " values, got " + std::to_string(mags_.size()));
    }
    validate();
  }

  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  std::size_t size() const { return mags_.size(); }
  bool empty() const { return mags_.empty(); }

  float& at(std::size_t t, std::size_t f) { return mags_[t * bins_ + f]; }
  float at(std::size_t t, std::size_t f) const { return mags_[t * bins_ + f]; }

  std::span<float> values() { return mags_; }
  std::span<const float> values() const { return mags_; }

  void validate() const {
    for (float v : mags_) {
      if (!(v >= 0.0f) || !std::isfinite(v)) {
        throw std::invalid_argument("Spectrogram: entries must be finite and non-negative");
      }
    }
  }

  bool same_shape(const Spectrogram& other) const {
    return frames_ == other.frames_ && bins_ == other.bins_;
  }

  friend bool operator==(const Spectrogram&, const Spectrogram&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::vector<float> mags_;
};

/// STFT values plus the framing metadata needed to invert them.
class ComplexSpectrogram {
 public:
  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t frames, std::size_t window_size, std::size_t hop)
      : frames_(frames),
        bins_(window_size / 2 + 1),
        window_size_(window_size),
        hop_(hop),
        values_(frames * (window_size / 2 + 1)) {}

  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  std::size_t window_size() const { return window_size_; }
  std::size_t hop() const { return hop_; }

  std::complex<double>& at(std::size_t t, std::size_t f) { return values_[t * bins_ + f]; }
  const std::complex<double>& at(std::size_t t, std::size_t f) const {
    return values_[t * bins_ + f];
  }

  std::span<std::complex<double>> values() { return values_; }
  std::span<const std::complex<double>> values() const { return values_; }

  Spectrogram magnitude() const {
    Spectrogram out(frames_, bins_);
    auto dst = out.values();
    for (std::size_t i = 0; i < values_.size(); ++i) {
      dst[i] = static_cast<float>(std::abs(values_[i]));
    }
    return out;
  }

  /// Checks the declared metadata against the stored grid.
  void check_consistent() const {
    if (window_size_ == 0 || window_size_ % 2 != 0 || hop_ == 0 || hop_ > window_size_ ||
        bins_ != window_size_ / 2 + 1 || values_.size() != frames_ * bins_) {
      throw std::invalid_argument("ComplexSpectrogram: inconsistent hop/window metadata");
    }
  }

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::size_t window_size_ = 0;
  std::size_t hop_ = 0;
  std::vector<std::complex<double>> values_;
};

}  // namespace weaksep::dsp
