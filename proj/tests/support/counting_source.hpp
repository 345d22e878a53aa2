#pragma once

#include "weaksep/training/data.hpp"

namespace weaksep::oracle {

/// Pass-through data source that counts every mixture and source read.
class CountingSource : public training::MixtureSource {
 public:
  explicit CountingSource(const training::MixtureSource& inner) : inner_(inner) {}
  std::size_t size() const override { return inner_.size(); }
  std::size_t classes() const override { return inner_.classes(); }
  const dsp::Spectrogram& mixture(std::size_t i) const override {
    ++mixture_reads;
    return inner_.mixture(i);
  }
  const std::vector<int>& labels(std::size_t i) const override { return inner_.labels(i); }
  bool has_sources() const override { return inner_.has_sources(); }
  const dsp::Spectrogram& source(std::size_t i, std::size_t k) const override {
    ++source_reads;
    return inner_.source(i, k);
  }
  mutable std::size_t source_reads = 0;
  mutable std::size_t mixture_reads = 0;

 private:
  const training::MixtureSource& inner_;
};

}  // namespace weaksep::oracle
