#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <stdexcept>
#include <thread>
#include <vector>

#include "weaksep/dataset/manifest.hpp"
#include "weaksep/dsp/stft.hpp"
#include "weaksep/sepmodel/objective.hpp"

namespace weaksep::training {

using sepmodel::Batch;
using sepmodel::Supervision;

/// Read-only view of mixture magnitude spectrograms, their class labels and,
/// when available, the ground-truth source magnitudes.
class MixtureSource {
 public:
  virtual ~MixtureSource() = default;
  virtual std::size_t size() const = 0;
  /// Number of classes K; labels(i) has length K.
  virtual std::size_t classes() const = 0;
  virtual const dsp::Spectrogram& mixture(std::size_t i) const = 0;
  virtual const std::vector<int>& labels(std::size_t i) const = 0;
  virtual bool has_sources() const = 0;
  /// Ground-truth magnitude of class index k in mixture i (only for active k).
  virtual const dsp::Spectrogram& source(std::size_t i, std::size_t k) const = 0;
};

/// Thrown when a class-supervised path asks for ground-truth sources.
class FirewallViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct SpectrogramExample {
  std::string id;
  dsp::Spectrogram mixture;
  std::vector<int> h;
  std::map<std::size_t, dsp::Spectrogram> sources;  // class index -> magnitude
};

class InMemorySource : public MixtureSource {
 public:
  InMemorySource(std::size_t classes, std::vector<SpectrogramExample> examples)
      : classes_(classes), examples_(std::move(examples)) {
    sources_ = !examples_.empty();
    for (const auto& e : examples_) {
      if (e.h.size() != classes_) throw ShapeError("InMemorySource: label vector length differs from class count");
      for (std::size_t k = 0; k < classes_; ++k)
        if (e.h[k] && !e.sources.count(k)) sources_ = false;
    }
  }

  std::size_t size() const override { return examples_.size(); }
  std::size_t classes() const override { return classes_; }
  const dsp::Spectrogram& mixture(std::size_t i) const override { return examples_.at(i).mixture; }
  const std::vector<int>& labels(std::size_t i) const override { return examples_.at(i).h; }
  bool has_sources() const override { return sources_; }
  const dsp::Spectrogram& source(std::size_t i, std::size_t k) const override {
    const auto& e = examples_.at(i);
    const auto it = e.sources.find(k);
    if (it == e.sources.end()) throw DataError("mixture " + e.id + " carries no source for class index " + std::to_string(k));
    return it->second;
  }
  const SpectrogramExample& example(std::size_t i) const { return examples_.at(i); }

 private:
  std::size_t classes_;
  std::vector<SpectrogramExample> examples_;
  bool sources_ = false;
};

/// Forwards everything except source(), which is refused.
class ClassOnlyView : public MixtureSource {
 public:
  explicit ClassOnlyView(const MixtureSource& inner) : inner_(inner) {}
  std::size_t size() const override { return inner_.size(); }
  std::size_t classes() const override { return inner_.classes(); }
  const dsp::Spectrogram& mixture(std::size_t i) const override { return inner_.mixture(i); }
  const std::vector<int>& labels(std::size_t i) const override { return inner_.labels(i); }
  bool has_sources() const override { return false; }
  const dsp::Spectrogram& source(std::size_t, std::size_t) const override {
    throw FirewallViolation("supervision firewall: class-supervised training may not read ground-truth sources");
  }

 private:
  const MixtureSource& inner_;
};

/// Assembles a training batch. Source tensors are filled only for signal
/// supervision, with zeros for inactive classes.
template <class T>
Batch<T> make_batch(const MixtureSource& data, std::span<const std::size_t> indices, Supervision supervision) {
  if (indices.empty()) throw std::invalid_argument("make_batch: no examples");
  const auto& first = data.mixture(indices[0]);
  const std::size_t frames = first.frames(), bins = first.bins(), per = frames * bins;
  const std::size_t n = indices.size(), classes = data.classes();
  Batch<T> batch;
  batch.mixtures = nn::Tensor<T>({n, frames, bins, 1});
  batch.h.reserve(n);
  if (supervision == Supervision::signal) batch.sources.assign(classes, nn::Tensor<T>({n, frames, bins, 1}));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& x = data.mixture(indices[r]);
    if (x.frames() != frames || x.bins() != bins) throw ShapeError("make_batch: mixtures differ in shape");
    std::copy(x.values().begin(), x.values().end(), batch.mixtures.data() + r * per);
    batch.h.push_back(data.labels(indices[r]));
    if (supervision == Supervision::signal) {
      for (std::size_t k = 0; k < classes; ++k) {
        if (!batch.h.back()[k]) continue;
        const auto& s = data.source(indices[r], k);
        std::copy(s.values().begin(), s.values().end(), batch.sources[k].data() + r * per);
      }
    }
  }
  return batch;
}

/// STFT magnitudes for every record of one partition. Sources are decoded only when requested.
inline InMemorySource load_spectrograms(const dataset::Manifest& manifest, dataset::Partition partition,
                                        bool with_sources, unsigned threads = 1) {
  const auto records = manifest.partition(partition);
  if (with_sources) {
    for (const auto& r : records)
      if (r.source_paths.size() != r.combination.size())
        throw DataError("manifest " + manifest.path.string() +
                        " has no ground-truth sources (mixture " + r.id + ")");
  }
  std::vector<SpectrogramExample> out(records.size());
  auto work = [&](std::size_t i) {
    const auto ex = dataset::load_example(manifest, records[i], with_sources);
    SpectrogramExample s;
    s.id = ex.id;
    s.h = ex.h;
    s.mixture = dsp::stft(ex.mixture).magnitude();
    for (std::size_t c = 0; c < ex.sources.size(); ++c) {
      const auto it = std::find(manifest.labels.begin(), manifest.labels.end(), ex.combination[c]);
      s.sources[static_cast<std::size_t>(it - manifest.labels.begin())] = dsp::stft(ex.sources[c]).magnitude();
    }
    out[i] = std::move(s);
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(records.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < records.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < records.size(); i += workers) work(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return InMemorySource(manifest.labels.size(), std::move(out));
}

}  // namespace weaksep::training
