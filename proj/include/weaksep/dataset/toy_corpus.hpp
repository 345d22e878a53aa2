#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "weaksep/dsp/wav.hpp"

namespace weaksep::dataset {

/// Synthetic stand-in for a spoken-digit corpus: each class is a fixed sequence of voiced
/// (formant-filtered pulse train) and noise (band-limited fricative/burst) segments, varied per
/// clip by pitch, vocal-tract scale, timing, onset and level.
struct ToyCorpusConfig {
  std::size_t clips_per_class = 300;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 1;
  double sample_rate = 16000.0;
  std::vector<int> classes{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
};

namespace toy {

struct Segment {
  bool voiced;
  std::array<double, 3> f_start;  // formants (voiced) or {center, bandwidth, 0} (noise)
  std::array<double, 3> f_end;
  double duration;
  double level;
};

inline Segment V(std::array<double, 3> a, std::array<double, 3> b, double dur, double level = 1.0) {
  return {true, a, b, dur, level};
}
inline Segment V(std::array<double, 3> a, double dur, double level = 1.0) { return {true, a, a, dur, level}; }
inline Segment N(double center, double bandwidth, double dur, double level) {
  return {false, {center, bandwidth, 0}, {center, bandwidth, 0}, dur, level};
}

inline const std::array<std::vector<Segment>, 10>& templates() {
  static const std::array<std::vector<Segment>, 10> t{{
      /* zero  */ {N(3300, 800, 0.10, 0.35), V({300, 2300, 3000}, {450, 1300, 1700}, 0.14), V({500, 900, 2400}, 0.20)},
      /* one   */ {V({350, 800, 2300}, {600, 1100, 2400}, 0.16), V({600, 1100, 2400}, 0.12), V({250, 1700, 2600}, 0.10, 0.4)},
      /* two   */ {N(2800, 1500, 0.05, 0.5), V({320, 900, 2300}, {300, 1100, 2300}, 0.28)},
      /* three */ {N(2000, 2500, 0.08, 0.15), V({450, 1300, 1700}, {300, 2300, 3000}, 0.26)},
      /* four  */ {N(1800, 2500, 0.10, 0.2), V({500, 850, 2500}, {450, 1300, 1700}, 0.26)},
      /* five  */ {N(1800, 2500, 0.08, 0.2), V({750, 1200, 2500}, {350, 2200, 2900}, 0.26), N(1500, 1000, 0.06, 0.15)},
      /* six   */ {N(3300, 800, 0.12, 0.35), V({400, 2000, 2600}, 0.12), N(2200, 800, 0.03, 0.45), N(3300, 800, 0.10, 0.3)},
      /* seven */ {N(3300, 800, 0.10, 0.35), V({550, 1800, 2500}, 0.12), V({500, 1500, 2500}, 0.08, 0.7), V({250, 1700, 2600}, 0.08, 0.4)},
      /* eight */ {V({500, 1900, 2500}, {300, 2300, 2900}, 0.24), N(2800, 1500, 0.04, 0.45)},
      /* nine  */ {V({250, 1700, 2600}, 0.08, 0.4), V({750, 1200, 2500}, {350, 2200, 2900}, 0.22), V({250, 1700, 2600}, 0.10, 0.4)},
  }};
  return t;
}

/// Two-pole resonator with unity gain at DC.
struct Resonator {
  double y1 = 0.0, y2 = 0.0;
  double step(double x, double freq, double bandwidth, double rate) {
    const double r = std::exp(-std::numbers::pi * bandwidth / rate);
    const double b1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / rate);
    const double b2 = -r * r;
    const double y = (1.0 - b1 - b2) * x + b1 * y1 + b2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

inline double ramp(double t, double duration, double edge) {
  if (t < edge) return 0.5 - 0.5 * std::cos(std::numbers::pi * t / edge);
  if (t > duration - edge) return 0.5 - 0.5 * std::cos(std::numbers::pi * (duration - t) / edge);
  return 1.0;
}

}  // namespace toy

/// One second of audio for digit `label`.
inline dsp::Waveform synthesize_toy_clip(int label, std::mt19937_64& rng, double rate = 16000.0) {
  using namespace toy;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  std::normal_distribution<double> gauss;

  const auto& segs = templates().at(static_cast<std::size_t>(label));
  const double tract = uniform(0.9, 1.12);
  std::array<double, 3> jitter{uniform(0.96, 1.04), uniform(0.96, 1.04), uniform(0.97, 1.03)};
  const double tempo = uniform(0.8, 1.25);
  const double f0_start = uniform(90.0, 240.0);
  const double f0_end = f0_start * uniform(0.75, 0.95);

  double total = 0.0;
  std::vector<double> durations;
  for (const auto& s : segs) durations.push_back(s.duration * tempo * uniform(0.85, 1.15));
  for (double d : durations) total += d;

  const auto n = static_cast<std::size_t>(rate);
  std::vector<double> out(n, 0.0);
  const double onset = uniform(0.05, std::max(0.06, 0.95 - total));
  std::size_t pos = static_cast<std::size_t>(onset * rate);
  double phase = 0.0;
  double elapsed = 0.0;
  std::array<Resonator, 3> cascade;
  Resonator fric, hp;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const auto& s = segs[k];
    const auto len = static_cast<std::size_t>(durations[k] * rate);
    const double level = s.level * uniform(0.8, 1.2);
    for (std::size_t i = 0; i < len && pos < n; ++i, ++pos) {
      const double t = static_cast<double>(i) / rate;
      const double frac = static_cast<double>(i) / static_cast<double>(len);
      const double env = level * ramp(t, durations[k], 0.012);
      double y = 0.0;
      if (s.voiced) {
        const double f0 = f0_start + (f0_end - f0_start) * (elapsed + t) / total;
        phase += f0 / rate;
        double x = 0.0;
        if (phase >= 1.0) {
          phase -= 1.0;
          x = 1.0;
        }
        x += 0.02 * gauss(rng);
        y = x;
        for (std::size_t f = 0; f < 3; ++f) {
          const double freq = (s.f_start[f] + (s.f_end[f] - s.f_start[f]) * frac) * tract * jitter[f];
          y = cascade[f].step(y, freq, 60.0 + 0.06 * freq, rate);
        }
        y *= 8.0;
      } else {
        const double center = s.f_start[0] * tract * jitter[1];
        y = fric.step(gauss(rng), center, s.f_start[1], rate);
        y -= hp.step(y, 0.0, 2000.0, rate);
        y *= 0.5;
      }
      out[pos] += env * y;
    }
    elapsed += durations[k];
  }
  double peak = 0.0;
  for (double x : out) peak = std::max(peak, std::abs(x));
  const double scale = peak > 0.0 ? uniform(0.2, 0.6) / peak : 0.0;
  for (double& x : out) x = x * scale + 0.002 * gauss(rng);
  return dsp::Waveform(std::move(out), rate);
}

/// Writes a corpus in the one-directory-per-word layout with validation/testing list files.
inline void generate_toy_corpus(const std::filesystem::path& root, const ToyCorpusConfig& cfg) {
  static const std::array<const char*, 10> words{"zero", "one", "two",   "three", "four",
                                                 "five", "six", "seven", "eight", "nine"};
  std::filesystem::create_directories(root);
  std::ofstream val(root / "validation_list.txt"), test(root / "testing_list.txt");
  for (int label : cfg.classes) {
    if (label < 0 || label > 9) throw std::invalid_argument("toy corpus classes must be digits 0..9");
    std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(label));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::string word = words[static_cast<std::size_t>(label)];
    for (std::size_t i = 0; i < cfg.clips_per_class; ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "%08llx_nohash_%zu.wav", static_cast<unsigned long long>(rng() & 0xffffffffULL), i);
      const std::string rel = word + "/" + name;
      dsp::write_wav(root / rel, synthesize_toy_clip(label, rng, cfg.sample_rate));
      const double r = u(rng);
      if (r < cfg.val_fraction) val << rel << '\n';
      else if (r < cfg.val_fraction + cfg.test_fraction) test << rel << '\n';
    }
  }
}

}  // namespace weaksep::dataset
