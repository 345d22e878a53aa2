#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "weaksep/dsp/resample.hpp"
#include "weaksep/dsp/wav.hpp"
#include "weaksep/dsp/waveform.hpp"
#include "weaksep/errors.hpp"
#include "weaksep/log.hpp"

namespace weaksep::dataset {

inline constexpr std::size_t kClipSamples = 8000;

enum class Partition { train, val, test };

inline std::string to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::test: return "test";
  }
  return "?";
}

inline Partition parse_partition(const std::string& s) {
  if (s == "train") return Partition::train;
  if (s == "val" || s == "validation") return Partition::val;
  if (s == "test") return Partition::test;
  throw DataError("unknown partition '" + s + "'");
}

inline constexpr std::array<Partition, 3> kPartitions{Partition::train, Partition::val, Partition::test};

/// Ordered label range C_{a:b} = {a, ..., b-1}.
class ClassSet {
 public:
  ClassSet(int a, int b) : a_(a), b_(b) {
    if (a < 0 || b > 10 || b - a < 3) {
      throw std::invalid_argument("ClassSet: need 0 <= a, b <= 10 and at least 3 classes, got " + spec());
    }
  }

  /// Parses "a:b".
  static ClassSet parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("class range must look like a:b, got '" + text + "'");
    int a = 0, b = 0;
    try {
      std::size_t used_a = 0, used_b = 0;
      a = std::stoi(text.substr(0, colon), &used_a);
      b = std::stoi(text.substr(colon + 1), &used_b);
      if (used_a != colon || used_b != text.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw std::invalid_argument("class range must look like a:b, got '" + text + "'");
    }
    return ClassSet(a, b);
  }

  int begin() const { return a_; }
  int end() const { return b_; }
  std::size_t size() const { return static_cast<std::size_t>(b_ - a_); }
  std::vector<int> labels() const {
    std::vector<int> out;
    for (int i = a_; i < b_; ++i) out.push_back(i);
    return out;
  }
  std::string spec() const { return std::to_string(a_) + ":" + std::to_string(b_); }
  bool operator==(const ClassSet&) const = default;

 private:
  int a_;
  int b_;
};

struct Clip {
  std::string id;
  int label = 0;
  Partition partition = Partition::train;
  std::filesystem::path path;          // empty for in-memory clips
  std::optional<dsp::Waveform> audio;  // 8 kHz, fitted length, before normalization
  double raw_rms = 0.0;
};

/// Labeled single-source clips. Audio is decoded lazily unless the clip was built in memory.
class Corpus {
 public:
  Corpus() = default;

  /// Builds a corpus from in-memory clips (8 kHz, any length); silent clips are dropped with a warning.
  static Corpus from_clips(std::vector<Clip> clips) {
    Corpus c;
    for (auto& clip : clips) {
      if (!clip.audio) throw std::invalid_argument("from_clips: clip " + clip.id + " has no audio");
      clip.audio = prepare(*clip.audio);
      clip.raw_rms = dsp::rms(*clip.audio);
      c.add(std::move(clip));
    }
    c.finish();
    return c;
  }

  const std::vector<Clip>& clips() const { return clips_; }
  double mean_train_rms() const { return mean_train_rms_; }
  std::size_t size() const { return clips_.size(); }

  std::vector<int> labels() const {
    std::set<int> s;
    for (const auto& c : clips_) s.insert(c.label);
    return {s.begin(), s.end()};
  }

  /// Indices of clips with the given label in the given partition, in corpus order.
  std::vector<std::size_t> pool(int label, Partition partition) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < clips_.size(); ++i)
      if (clips_[i].label == label && clips_[i].partition == partition) out.push_back(i);
    return out;
  }

  /// RMS-normalized 8000-sample waveform of clip i.
  dsp::Waveform audio(std::size_t i) const {
    const Clip& clip = clips_.at(i);
    dsp::Waveform w = clip.audio ? *clip.audio : prepare(dsp::read_wav(clip.path));
    const double gain = mean_train_rms_ / clip.raw_rms;
    for (double& x : w.samples) x *= gain;
    return w;
  }

  /// Resamples to 8 kHz and fits to 8000 samples.
  static dsp::Waveform prepare(const dsp::Waveform& w) {
    return dsp::fit_length(dsp::resample_to(w, dsp::kModelSampleRate), kClipSamples);
  }

  void add(Clip clip) {
    if (!(clip.raw_rms > 0.0)) {
      log::warn("silent recording skipped: " + clip.id);
      return;
    }
    if (!ids_.insert(clip.id).second) throw DataError("duplicate clip id " + clip.id);
    clips_.push_back(std::move(clip));
  }

  void finish() {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& c : clips_) {
      if (c.partition != Partition::train) continue;
      acc += c.raw_rms;
      ++n;
    }
    if (n == 0) throw DataError("corpus has no training clips");
    mean_train_rms_ = acc / static_cast<double>(n);
  }

 private:
  std::vector<Clip> clips_;
  std::set<std::string> ids_;
  double mean_train_rms_ = 0.0;
};

namespace detail {

inline std::optional<int> label_from_dir(const std::string& name) {
  static const std::array<const char*, 10> words{"zero", "one", "two",   "three", "four",
                                                 "five", "six", "seven", "eight", "nine"};
  for (int i = 0; i < 10; ++i) {
    if (name == words[static_cast<std::size_t>(i)] || name == std::to_string(i)) return i;
  }
  return std::nullopt;
}

inline std::set<std::string> read_list(const std::filesystem::path& path) {
  std::set<std::string> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

}  // namespace detail

/// Loads a corpus laid out as one directory per digit ("0".."9" or "zero".."nine") holding WAV files.
/// Partition assignment comes from validation_list.txt / testing_list.txt (paths relative to root);
/// every other clip is training data.
inline Corpus load_corpus(const std::filesystem::path& root, const std::vector<int>& class_filter) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("corpus root is not a directory: " + root.string());
  const auto val = detail::read_list(root / "validation_list.txt");
  const auto test = detail::read_list(root / "testing_list.txt");
  const std::set<int> wanted(class_filter.begin(), class_filter.end());

  std::map<int, fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const auto label = detail::label_from_dir(entry.path().filename().string());
    if (label && (wanted.empty() || wanted.count(*label))) dirs[*label] = entry.path();
  }

  Corpus corpus;
  for (const auto& [label, dir] : dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      Clip clip;
      clip.id = dir.filename().string() + "/" + file.filename().string();
      clip.label = label;
      clip.partition = val.count(clip.id) ? Partition::val : test.count(clip.id) ? Partition::test : Partition::train;
      clip.path = file;
      try {
        clip.raw_rms = dsp::rms(Corpus::prepare(dsp::read_wav(file)));
      } catch (const DataError& e) {
        log::warn(std::string("unreadable clip skipped: ") + e.what());
        continue;
      }
      corpus.add(std::move(clip));
    }
  }
  for (int label : wanted) {
    if (corpus.pool(label, Partition::train).empty() && corpus.pool(label, Partition::val).empty() &&
        corpus.pool(label, Partition::test).empty()) {
      throw DataError("class " + std::to_string(label) + " has no usable clips under " + root.string());
    }
  }
  corpus.finish();
  return corpus;
}

}  // namespace weaksep::dataset
