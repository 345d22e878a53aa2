#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "weaksep/dataset/manifest.hpp"
#include "weaksep/dataset/toy_corpus.hpp"

using namespace weaksep;
using namespace weaksep::dataset;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("weaksep_test_dataset_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

dsp::Waveform noise(std::mt19937_64& rng, double amplitude, std::size_t n = 8000) {
  std::uniform_real_distribution<double> d(-amplitude, amplitude);
  std::vector<double> s(n);
  for (auto& x : s) x = d(rng);
  return dsp::Waveform(std::move(s), 8000.0);
}

/// Three classes, `per_partition` clips of each class in every partition.
Corpus synthetic_corpus(std::vector<int> labels, std::size_t per_partition, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::vector<Clip> clips;
  for (int label : labels)
    for (Partition p : kPartitions)
      for (std::size_t i = 0; i < per_partition; ++i) {
        Clip c;
        c.id = std::to_string(label) + "/" + to_string(p) + std::to_string(i);
        c.label = label;
        c.partition = p;
        c.audio = noise(rng, 0.1 + 0.05 * static_cast<double>(i % 4));
        clips.push_back(std::move(c));
      }
  return Corpus::from_clips(std::move(clips));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Combinations, ThreeConsecutiveDigits) {
  EXPECT_EQ(enumerate_combinations(ClassSet(6, 9), 2), (std::vector<std::vector<int>>{{6, 7}, {6, 8}, {7, 8}}));
}

TEST(Combinations, AllTenDigitsLexicographic) {
  const auto combos = enumerate_combinations(ClassSet(0, 10), 2);
  EXPECT_EQ(combos.size(), 45u);
  EXPECT_TRUE(std::is_sorted(combos.begin(), combos.end()));
  EXPECT_EQ(std::set<std::vector<int>>(combos.begin(), combos.end()).size(), 45u);
  EXPECT_EQ(enumerate_combinations(ClassSet(0, 10), 3).size(), 120u);
}

TEST(Combinations, FullSetAndTooMany) {
  EXPECT_EQ(enumerate_combinations(ClassSet(2, 6), 4), (std::vector<std::vector<int>>{{2, 3, 4, 5}}));
  EXPECT_THROW(enumerate_combinations(ClassSet(0, 3), 4), std::invalid_argument);
}

TEST(ClassSetTest, RangeAndParsing) {
  EXPECT_EQ(ClassSet::parse("6:9").labels(), (std::vector<int>{6, 7, 8}));
  EXPECT_EQ(ClassSet::parse("0:10").size(), 10u);
  EXPECT_THROW(ClassSet(0, 2), std::invalid_argument);
  EXPECT_THROW(ClassSet(5, 11), std::invalid_argument);
  EXPECT_THROW(ClassSet::parse("6-9"), std::invalid_argument);
  EXPECT_THROW(ClassSet::parse("6:9x"), std::invalid_argument);
}

TEST(MixtureSpecTest, RejectsDegenerateSpecs) {
  MixtureSpec spec;
  spec.classes = ClassSet(0, 3);
  spec.components = 3;  // a single combination
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.components = 1;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.components = 2;
  EXPECT_NO_THROW(spec.validate());
}

TEST(CorpusTest, MeanTrainRmsAndNormalization) {
  std::vector<Clip> clips;
  for (double level : {1.0, 3.0}) {
    Clip c;
    c.id = "a" + std::to_string(level);
    c.label = 0;
    c.audio = dsp::Waveform(std::vector<double>(8000, level), 8000.0);
    clips.push_back(c);
  }
  Clip v;
  v.id = "val";
  v.label = 0;
  v.partition = Partition::val;
  v.audio = dsp::Waveform(std::vector<double>(8000, 10.0), 8000.0);
  clips.push_back(v);
  const auto corpus = Corpus::from_clips(clips);
  EXPECT_DOUBLE_EQ(corpus.mean_train_rms(), 2.0);
  for (std::size_t i = 0; i < corpus.size(); ++i) EXPECT_NEAR(dsp::rms(corpus.audio(i)), 2.0, 2e-9);
}

TEST(CorpusTest, EqualRmsIsIdentity) {
  std::mt19937_64 rng(1);
  std::vector<Clip> clips;
  for (int i = 0; i < 4; ++i) {
    Clip c;
    c.id = std::to_string(i);
    c.audio = dsp::rms_normalize(noise(rng, 1.0), 0.25);
    clips.push_back(c);
  }
  const auto corpus = Corpus::from_clips(clips);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto a = corpus.audio(i);
    for (std::size_t t = 0; t < 8000; ++t) ASSERT_NEAR(a.samples[t], clips[i].audio->samples[t], 1e-9);
  }
}

TEST(CorpusTest, PadsAndTrimsToOneSecond) {
  std::vector<Clip> clips(2);
  clips[0].id = "short";
  clips[0].audio = dsp::Waveform(std::vector<double>(100, 0.5), 8000.0);
  clips[1].id = "long";
  clips[1].audio = dsp::Waveform(std::vector<double>(9000, 0.5), 8000.0);
  const auto corpus = Corpus::from_clips(clips);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(corpus.audio(i).size(), kClipSamples);
  EXPECT_EQ(corpus.audio(0).samples[100], 0.0);
}

TEST(CorpusTest, LoadsDirectoryLayoutSkippingBadClips) {
  const auto root = scratch("layout");
  std::mt19937_64 rng(2);
  for (const char* dir : {"zero", "one", "2"}) {
    for (int i = 0; i < 3; ++i) {
      auto w = noise(rng, 0.2, 16000);
      w.sample_rate = 16000.0;
      dsp::write_wav(root / dir / ("clip" + std::to_string(i) + ".wav"), w);
    }
  }
  dsp::write_wav(root / "one" / "silent.wav", dsp::Waveform(std::vector<double>(16000, 0.0), 16000.0));
  std::ofstream(root / "one" / "broken.wav") << "not a wav";
  std::ofstream(root / "validation_list.txt") << "zero/clip0.wav\n";
  std::ofstream(root / "testing_list.txt") << "one/clip1.wav\n2/clip2.wav\n";

  const auto corpus = load_corpus(root, {0, 1, 2});
  EXPECT_EQ(corpus.size(), 9u);
  EXPECT_EQ(corpus.labels(), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(corpus.pool(0, Partition::val).size(), 1u);
  EXPECT_EQ(corpus.pool(1, Partition::test).size(), 1u);
  EXPECT_EQ(corpus.pool(2, Partition::train).size(), 2u);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto w = corpus.audio(i);
    EXPECT_EQ(w.size(), 8000u);
    EXPECT_EQ(w.sample_rate, 8000.0);
    EXPECT_NEAR(dsp::rms(w), corpus.mean_train_rms(), 1e-9);
  }
  std::set<std::string> ids;
  for (const auto& c : corpus.clips()) ids.insert(c.id);
  EXPECT_EQ(ids.size(), corpus.size());
  EXPECT_FALSE(ids.count("one/silent.wav"));

  EXPECT_EQ(load_corpus(root, {1}).labels(), (std::vector<int>{1}));
  EXPECT_THROW(load_corpus(root, {0, 5}), DataError);
  fs::remove_all(root);
}

TEST(Synthesize, CombinationCyclingCountsAndGains) {
  const auto corpus = synthetic_corpus({6, 7, 8}, 4);
  MixtureSpec spec;
  spec.classes = ClassSet(6, 9);
  spec.counts = {9, 0, 0};
  spec.seed = 7;
  const auto ex = synthesize(spec, corpus);
  ASSERT_EQ(ex.size(), 9u);
  std::map<std::vector<int>, int> counts;
  std::set<std::pair<std::vector<int>, double>> pairs;
  for (const auto& e : ex) {
    ++counts[e.combination];
    pairs.insert({e.combination, e.gain_db});
  }
  EXPECT_EQ(counts.size(), 3u);
  for (const auto& [combo, n] : counts) EXPECT_EQ(n, 3) << combo[0] << combo[1];
  EXPECT_EQ(pairs.size(), 9u);  // every combination at every gain
}

TEST(Synthesize, GainScalesSecondComponent) {
  const auto corpus = synthetic_corpus({0, 1, 2}, 3);
  MixtureSpec spec;
  spec.classes = ClassSet(0, 3);
  spec.counts = {9, 3, 3};
  spec.quantize = false;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index[corpus.clips()[i].id] = i;
  for (const auto& e : synthesize(spec, corpus)) {
    const auto a = corpus.audio(index.at(e.clip_ids[0]));
    const auto b = corpus.audio(index.at(e.clip_ids[1]));
    const double g = std::pow(10.0, e.gain_db / 20.0);
    for (std::size_t t = 0; t < 8000; ++t) {
      ASSERT_EQ(e.sources[0].samples[t], a.samples[t]);
      ASSERT_EQ(e.sources[1].samples[t], b.samples[t] * g);
      ASSERT_EQ(e.mixture.samples[t], a.samples[t] + b.samples[t] * g);
    }
  }
  EXPECT_NEAR(db_to_amplitude(-6.0), 0.5012, 1e-4);
}

TEST(Synthesize, PartitionsDrawOnlyFromTheirOwnClips) {
  const auto corpus = synthetic_corpus({0, 1, 2}, 5);
  MixtureSpec spec;
  spec.classes = ClassSet(0, 3);
  spec.counts = {30, 12, 12};
  std::map<std::string, Partition> part;
  for (const auto& c : corpus.clips()) part[c.id] = c.partition;
  for (const auto& e : synthesize(spec, corpus)) {
    for (const auto& id : e.clip_ids) EXPECT_EQ(part.at(id), e.partition);
    EXPECT_EQ(e.h, label_vector({0, 1, 2}, e.combination));
    int active = 0;
    for (int h : e.h) active += h;
    EXPECT_EQ(active, 2);
  }
}

TEST(Synthesize, WithoutReplacementUntilPoolExhausted) {
  const auto corpus = synthetic_corpus({0, 1, 2}, 6);
  MixtureSpec spec;
  spec.classes = ClassSet(0, 3);
  spec.counts = {9, 0, 0};  // each class drawn 6 times: exactly one pass over its pool
  std::map<int, std::set<std::string>> seen;
  for (const auto& e : synthesize(spec, corpus))
    for (std::size_t c = 0; c < 2; ++c) EXPECT_TRUE(seen[e.combination[c]].insert(e.clip_ids[c]).second);
  for (const auto& [label, ids] : seen) EXPECT_EQ(ids.size(), 6u);
}

TEST(Synthesize, MissingClassInPartitionIsAnError) {
  auto corpus = synthetic_corpus({0, 1}, 3);
  MixtureSpec spec;
  spec.classes = ClassSet(0, 3);
  spec.counts = {3, 0, 0};
  EXPECT_THROW(synthesize(spec, corpus), DataError);
}

TEST(Synthesize, ThreadedMatchesSingleThreaded) {
  const auto corpus = synthetic_corpus({0, 1, 2, 3}, 4);
  MixtureSpec spec;
  spec.classes = ClassSet(0, 4);
  spec.counts = {20, 5, 5};
  const auto a = synthesize(spec, corpus, 1);
  const auto b = synthesize(spec, corpus, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].mixture.samples, b[i].mixture.samples);
}

// Property: combination balance and sample-exact mixtures over random configurations.
TEST(SynthesizeProperty, BalanceAndExactSums) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const int k = 3 + static_cast<int>(rng() % 3);
    const int o = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(k - 2));
    std::vector<int> labels;
    for (int i = 0; i < k; ++i) labels.push_back(i);
    const auto corpus = synthetic_corpus(labels, 3, rng());
    MixtureSpec spec;
    spec.classes = ClassSet(0, k);
    spec.components = o;
    spec.counts = {rng() % 40 + 1, rng() % 10, rng() % 10};
    spec.seed = rng();
    const auto ex = synthesize(spec, corpus);
    for (Partition p : kPartitions) {
      std::map<std::vector<int>, std::size_t> counts;
      for (const auto& c : enumerate_combinations(spec.classes, o)) counts[c] = 0;
      for (const auto& e : ex)
        if (e.partition == p) ++counts[e.combination];
      std::size_t lo = SIZE_MAX, hi = 0;
      for (const auto& [c, n] : counts) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
      }
      EXPECT_LE(hi - lo, 1u);
    }
    for (const auto& e : ex) {
      for (std::size_t t = 0; t < 8000; ++t) {
        double sum = 0.0;
        for (const auto& s : e.sources) sum += s.samples[t];
        ASSERT_EQ(e.mixture.samples[t], sum);
        ASSERT_EQ(dsp::from_pcm16(dsp::to_pcm16(e.mixture.samples[t])), e.mixture.samples[t]);
      }
    }
  }
}

TEST(Manifest, RoundTripThroughWavFilesIsSampleExact) {
  const auto dir = scratch("roundtrip");
  const auto corpus = synthetic_corpus({0, 1, 2}, 3);
  MixtureSpec spec;
  spec.classes = ClassSet(0, 3);
  spec.counts = {6, 3, 3};
  const auto ex = synthesize(spec, corpus);
  const auto written = write_dataset(ex, spec.classes.labels(), dir, to_json(spec));
  const auto read = read_manifest(dir / "manifest.jsonl");
  EXPECT_EQ(read.labels, written.labels);
  EXPECT_EQ(read.spec, written.spec);
  EXPECT_EQ(read.records, written.records);
  EXPECT_TRUE(read.has_sources());
  EXPECT_EQ(read.partition(Partition::val).size(), 3u);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    const auto loaded = load_example(read, read.records[i], true);
    EXPECT_EQ(loaded.mixture.samples, ex[i].mixture.samples);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(loaded.sources[c].samples, ex[i].sources[c].samples);
  }
  fs::remove_all(dir);
}

TEST(Manifest, IdenticalSeedsGiveByteIdenticalManifests) {
  const auto corpus = synthetic_corpus({0, 1, 2}, 4);
  MixtureSpec spec;
  spec.classes = ClassSet(0, 3);
  spec.counts = {12, 3, 3};
  spec.seed = 99;
  const auto a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  write_dataset(synthesize(spec, corpus), spec.classes.labels(), a, to_json(spec));
  write_dataset(synthesize(spec, corpus, 3), spec.classes.labels(), b, to_json(spec));
  spec.seed = 100;
  write_dataset(synthesize(spec, corpus), spec.classes.labels(), c, to_json(spec));
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
  EXPECT_NE(slurp(a / "manifest.jsonl"), slurp(c / "manifest.jsonl"));
  EXPECT_EQ(slurp(a / "audio/train-000004.mix.wav"), slurp(b / "audio/train-000004.mix.wav"));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST(Manifest, EmptyDeletedAndVersionErrors) {
  const auto dir = scratch("errors");
  write_dataset({}, {0, 1, 2}, dir, {});
  EXPECT_TRUE(read_manifest(dir / "manifest.jsonl").records.empty());

  const auto corpus = synthetic_corpus({0, 1, 2}, 2);
  MixtureSpec spec;
  spec.classes = ClassSet(0, 3);
  spec.counts = {3, 0, 0};
  write_dataset(synthesize(spec, corpus), {0, 1, 2}, dir, to_json(spec));
  const auto victim = dir / "audio" / "train-000001.src2.wav";
  ASSERT_TRUE(fs::exists(victim));
  fs::remove(victim);
  try {
    read_manifest(dir / "manifest.jsonl");
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(victim.string()), std::string::npos) << e.what();
  }

  auto text = slurp(dir / "manifest.jsonl");
  text.replace(text.find("\"version\":1"), 11, "\"version\":7");
  std::ofstream(dir / "v7.jsonl", std::ios::binary) << text;
  EXPECT_THROW(read_manifest(dir / "v7.jsonl", false), DataError);
  EXPECT_THROW(read_manifest(dir / "nope.jsonl"), DataError);
  fs::remove_all(dir);
}

TEST(Manifest, MixturesOnlyDatasetHasNoSources) {
  const auto dir = scratch("nosrc");
  const auto corpus = synthetic_corpus({0, 1, 2}, 2);
  MixtureSpec spec;
  spec.classes = ClassSet(0, 3);
  spec.counts = {3, 0, 0};
  write_dataset(synthesize(spec, corpus), {0, 1, 2}, dir, to_json(spec), false);
  const auto m = read_manifest(dir / "manifest.jsonl");
  EXPECT_FALSE(m.has_sources());
  EXPECT_THROW(load_example(m, m.records[0], true), DataError);
  EXPECT_NO_THROW(load_example(m, m.records[0], false));
  fs::remove_all(dir);
}

TEST(ToyCorpus, GeneratesLoadableClassesAndPartitions) {
  const auto root = scratch("toy");
  ToyCorpusConfig cfg;
  cfg.clips_per_class = 20;
  cfg.classes = {0, 1, 2, 6};
  cfg.val_fraction = 0.2;
  cfg.test_fraction = 0.2;
  generate_toy_corpus(root, cfg);
  const auto corpus = load_corpus(root, {0, 1, 2, 6});
  EXPECT_EQ(corpus.size(), 80u);
  for (int label : cfg.classes)
    for (Partition p : kPartitions) EXPECT_FALSE(corpus.pool(label, p).empty()) << label << to_string(p);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto w = corpus.audio(i);
    EXPECT_TRUE(dsp::all_finite(w));
    EXPECT_NEAR(dsp::rms(w), corpus.mean_train_rms(), 1e-9);
  }
  fs::remove_all(root);
}
