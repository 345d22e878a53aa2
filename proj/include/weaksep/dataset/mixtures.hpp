#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <thread>
#include <vector>

#include "weaksep/dataset/corpus.hpp"

namespace weaksep::dataset {

/// Largest absolute sample value allowed in a stored mixture or component.
inline constexpr double kPeakLimit = 0.98;

/// All size-`components` subsets of the class set, in lexicographic order.
inline std::vector<std::vector<int>> enumerate_combinations(const std::vector<int>& labels, int components) {
  const auto k = static_cast<int>(labels.size());
  if (components < 1) throw std::invalid_argument("enumerate_combinations: need at least one component");
  if (components > k) {
    throw std::invalid_argument("enumerate_combinations: " + std::to_string(components) + " components exceed " +
                                std::to_string(k) + " classes");
  }
  std::vector<std::vector<int>> out;
  std::vector<int> idx(static_cast<std::size_t>(components));
  for (int i = 0; i < components; ++i) idx[static_cast<std::size_t>(i)] = i;
  while (true) {
    std::vector<int> combo;
    for (int i : idx) combo.push_back(labels[static_cast<std::size_t>(i)]);
    out.push_back(std::move(combo));
    int pos = components - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == k - components + pos) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (int j = pos + 1; j < components; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

inline std::vector<std::vector<int>> enumerate_combinations(const ClassSet& classes, int components) {
  return enumerate_combinations(classes.labels(), components);
}

struct MixtureCounts {
  std::size_t train = 15000;
  std::size_t val = 1875;
  std::size_t test = 1875;

  std::size_t of(Partition p) const { return p == Partition::train ? train : p == Partition::val ? val : test; }
};

struct MixtureSpec {
  ClassSet classes{0, 10};
  int components = 2;
  MixtureCounts counts;
  std::vector<double> gains_db{-6.0, 0.0, 6.0};
  std::uint64_t seed = 0;
  /// Round components to 16-bit PCM before summing so that stored WAVs reproduce the mixture exactly.
  bool quantize = true;

  void validate() const {
    if (components < 2) throw std::invalid_argument("MixtureSpec: need at least 2 components per mixture");
    if (components >= static_cast<int>(classes.size())) {
      throw std::invalid_argument("MixtureSpec: " + std::to_string(components) + " components of " +
                                  std::to_string(classes.size()) + " classes give a single combination");
    }
    if (gains_db.empty()) throw std::invalid_argument("MixtureSpec: empty gain list");
    for (double g : gains_db)
      if (!std::isfinite(g)) throw std::invalid_argument("MixtureSpec: non-finite gain");
  }
};

struct MixtureExample {
  std::string id;
  Partition partition = Partition::train;
  std::vector<int> combination;
  double gain_db = 0.0;
  std::vector<int> h;
  dsp::Waveform mixture;
  /// Gain-scaled components in combination order; their sum is `mixture`.
  std::vector<dsp::Waveform> sources;
  std::vector<std::string> clip_ids;
  /// Common factor applied to all components to avoid clipping (1 when none was needed).
  double headroom = 1.0;
};

/// One planned mixture: which combination, which gain and which corpus clips.
struct PlannedMixture {
  std::string id;
  Partition partition;
  std::vector<int> combination;
  double gain_db;
  std::vector<std::size_t> clips;
};

inline double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }

inline std::vector<int> label_vector(const std::vector<int>& labels, const std::vector<int>& combination) {
  std::vector<int> h(labels.size(), 0);
  for (int c : combination) {
    const auto it = std::find(labels.begin(), labels.end(), c);
    if (it == labels.end()) throw DataError("label " + std::to_string(c) + " is not in the class set");
    h[static_cast<std::size_t>(it - labels.begin())] = 1;
  }
  return h;
}

/// Deterministic cycling plan. Mixture i of a partition uses combination i mod C and gain
/// (i div C) mod G, so every combination meets every gain. Clips are drawn without replacement
/// from per-class pools that are reshuffled when exhausted.
inline std::vector<PlannedMixture> plan_mixtures(const MixtureSpec& spec, const Corpus& corpus) {
  spec.validate();
  const auto combos = enumerate_combinations(spec.classes, spec.components);
  std::vector<PlannedMixture> plan;
  for (Partition part : kPartitions) {
    const std::size_t count = spec.counts.of(part);
    if (count == 0) continue;
    std::mt19937_64 rng(spec.seed * 3 + static_cast<std::uint64_t>(part) + 0x5eedULL);
    std::map<int, std::vector<std::size_t>> pools;
    std::map<int, std::size_t> cursor;
    for (int label : spec.classes.labels()) {
      auto pool = corpus.pool(label, part);
      if (pool.empty()) {
        throw DataError("class " + std::to_string(label) + " has no clips in the " + to_string(part) + " partition");
      }
      std::shuffle(pool.begin(), pool.end(), rng);
      pools[label] = std::move(pool);
      cursor[label] = 0;
    }
    for (std::size_t i = 0; i < count; ++i) {
      PlannedMixture m;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%06zu", to_string(part).c_str(), i);
      m.id = id;
      m.partition = part;
      m.combination = combos[i % combos.size()];
      m.gain_db = spec.gains_db[(i / combos.size()) % spec.gains_db.size()];
      for (int label : m.combination) {
        auto& pool = pools[label];
        auto& at = cursor[label];
        if (at == pool.size()) {
          std::shuffle(pool.begin(), pool.end(), rng);
          at = 0;
        }
        m.clips.push_back(pool[at++]);
      }
      plan.push_back(std::move(m));
    }
  }
  return plan;
}

/// Renders one planned mixture. Components after the first are scaled by 10^(g/20).
inline MixtureExample realize(const PlannedMixture& m, const MixtureSpec& spec, const Corpus& corpus) {
  MixtureExample ex;
  ex.id = m.id;
  ex.partition = m.partition;
  ex.combination = m.combination;
  ex.gain_db = m.gain_db;
  ex.h = label_vector(spec.classes.labels(), m.combination);
  const double gain = db_to_amplitude(m.gain_db);
  for (std::size_t c = 0; c < m.clips.size(); ++c) {
    dsp::Waveform w = corpus.audio(m.clips[c]);
    if (c > 0)
      for (double& x : w.samples) x *= gain;
    ex.sources.push_back(std::move(w));
    ex.clip_ids.push_back(corpus.clips()[m.clips[c]].id);
  }
  if (spec.quantize) {
    double peak = 0.0;
    for (std::size_t t = 0; t < kClipSamples; ++t) {
      double sum = 0.0;
      for (const auto& s : ex.sources) {
        sum += s.samples[t];
        peak = std::max(peak, std::abs(s.samples[t]));
      }
      peak = std::max(peak, std::abs(sum));
    }
    if (peak > kPeakLimit) {
      ex.headroom = kPeakLimit / peak;
      for (auto& s : ex.sources)
        for (double& x : s.samples) x *= ex.headroom;
    }
    for (auto& s : ex.sources) s = dsp::quantize_pcm16(s);
  }
  ex.mixture = dsp::Waveform(std::vector<double>(kClipSamples, 0.0), dsp::kModelSampleRate);
  for (const auto& s : ex.sources)
    for (std::size_t t = 0; t < kClipSamples; ++t) ex.mixture.samples[t] += s.samples[t];
  return ex;
}

/// Plans single-threaded from the seed, then renders mixtures on up to `threads` workers.
inline std::vector<MixtureExample> synthesize(const MixtureSpec& spec, const Corpus& corpus, unsigned threads = 1) {
  const auto plan = plan_mixtures(spec, corpus);
  std::vector<MixtureExample> out(plan.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(plan.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < plan.size(); ++i) out[i] = realize(plan[i], spec, corpus);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < plan.size(); i += workers) out[i] = realize(plan[i], spec, corpus);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace weaksep::dataset
