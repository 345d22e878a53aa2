#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "weaksep/dataset/manifest.hpp"
#include "weaksep/dataset/toy_corpus.hpp"
#include "weaksep/evaluation/separation.hpp"
#include "weaksep/log.hpp"
#include "weaksep/training/trainer.hpp"

namespace weaksep::cli {

namespace fs = std::filesystem;

inline const std::vector<std::pair<sepmodel::Variant, sepmodel::Supervision>>& all_methods() {
  using sepmodel::Supervision;
  using sepmodel::Variant;
  static const std::vector<std::pair<Variant, Supervision>> m{{Variant::ae, Supervision::signal},
                                                              {Variant::ae, Supervision::class_label},
                                                              {Variant::vae, Supervision::signal},
                                                              {Variant::vae, Supervision::class_label}};
  return m;
}

inline std::string method_tag(sepmodel::Variant v, sepmodel::Supervision s) {
  return sepmodel::to_string(v) + "-" + sepmodel::to_string(s);
}

inline dataset::MixtureCounts desk_counts() { return {1500, 200, 200}; }
inline dataset::MixtureCounts full_counts() { return {15000, 1875, 1875}; }

struct ExperimentConfig {
  fs::path corpus;
  fs::path out_dir;
  dataset::MixtureCounts counts = desk_counts();
  std::vector<double> gains_db{-6.0, 0.0, 6.0};
  int components = 2;
  std::uint64_t seed = 0;
  training::TrainConfig train;  // variant, supervision and run_id are set per run
  unsigned threads = 1;
  /// Skip training when a finished model for the run already exists in out_dir.
  bool reuse = false;

  nlohmann::json to_json() const {
    return {{"corpus", corpus.string()},
            {"out_dir", out_dir.string()},
            {"counts", {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}}},
            {"gains_db", gains_db},
            {"components", components},
            {"seed", seed},
            {"train", train.to_json()},
            {"threads", threads}};
  }
};

/// One trained model plus its scores on the test partition.
struct RunOutcome {
  std::string run_id;
  std::string method;
  fs::path model_path;
  training::TrainHistory history;
  std::vector<evaluation::EvalRecord> records;
  double seconds = 0.0;
};

/// Synthesizes (or reuses) the mixture dataset for a class set.
inline dataset::Manifest prepare_dataset(const ExperimentConfig& cfg, const dataset::ClassSet& classes,
                                         const fs::path& dir) {
  const auto manifest_path = dir / "manifest.jsonl";
  dataset::MixtureSpec spec;
  spec.classes = classes;
  spec.components = cfg.components;
  spec.counts = cfg.counts;
  spec.gains_db = cfg.gains_db;
  spec.seed = cfg.seed;
  if (cfg.reuse && fs::exists(manifest_path)) {
    auto m = dataset::read_manifest(manifest_path);
    if (m.spec == dataset::to_json(spec)) return m;
  }
  log::info("synthesizing " + classes.spec() + " mixtures into " + dir.string());
  const auto corpus = dataset::load_corpus(cfg.corpus, classes.labels());
  const auto examples = dataset::synthesize(spec, corpus, cfg.threads);
  dataset::write_dataset(examples, classes.labels(), dir, dataset::to_json(spec));
  return dataset::read_manifest(manifest_path);
}

/// Trains one variant/supervision pair on the manifest and scores it.
inline RunOutcome train_and_evaluate(const ExperimentConfig& cfg, const dataset::Manifest& manifest,
                                     const training::InMemorySource& train_set, const training::InMemorySource& val_set,
                                     sepmodel::Variant variant, sepmodel::Supervision supervision,
                                     const std::string& run_id, const fs::path& model_dir) {
  RunOutcome out;
  out.run_id = run_id;
  out.method = method_tag(variant, supervision);
  out.model_path = model_dir / (run_id + ".model.ckpt");
  const auto start = std::chrono::steady_clock::now();
  auto tc = cfg.train;
  tc.variant = variant;
  tc.supervision = supervision;
  tc.run_id = run_id;
  tc.checkpoint_dir = model_dir;

  std::optional<sepmodel::ModelBundle<float>> model;
  if (cfg.reuse && fs::exists(out.model_path)) {
    const auto ckpt = nn::read_checkpoint(out.model_path);
    if (ckpt.header.contains("training") && ckpt.header["training"].value("config", nlohmann::json()) == tc.to_json()) {
      model.emplace(sepmodel::ModelBundle<float>::from_checkpoint(ckpt));
      log::info(run_id + ": reusing " + out.model_path.string());
    }
  }
  if (!model) {
    log::info(run_id + ": training " + out.method);
    model.emplace(manifest.labels, variant, sepmodel::Architecture{}, tc.beta, tc.seed);
    out.history = training::train<float>(*model, train_set, val_set, tc);
    auto ckpt = model->to_checkpoint();
    ckpt.header["training"] = {{"config", tc.to_json()}, {"history", out.history.summary()}};
    nn::write_checkpoint(out.model_path, ckpt);
  }
  out.records = evaluation::evaluate_model(*model, manifest, out.method, run_id);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct CompareResult {
  std::vector<RunOutcome> runs;
  std::vector<evaluation::EvalRecord> records;  // all methods plus oracle
  evaluation::Summary summary;                  // grouped by method
  dataset::Manifest manifest;

  double median_sdr(const std::string& method) const { return summary.find({method}).sdr_stats.median; }
  const RunOutcome& run(const std::string& method) const {
    for (const auto& r : runs)
      if (r.method == method) return r;
    throw std::out_of_range("no run for method " + method);
  }
};

/// Four-way comparison (AE/VAE x signal/class supervision) plus the oracle mask on one class set.
inline CompareResult run_compare(const ExperimentConfig& cfg, const dataset::ClassSet& classes,
                                 std::vector<std::pair<sepmodel::Variant, sepmodel::Supervision>> methods = all_methods()) {
  CompareResult result;
  result.manifest = prepare_dataset(cfg, classes, cfg.out_dir / "data");
  const auto train_set = training::load_spectrograms(result.manifest, dataset::Partition::train, true, cfg.threads);
  const auto val_set = training::load_spectrograms(result.manifest, dataset::Partition::val, true, cfg.threads);
  for (const auto& [variant, supervision] : methods) {
    result.runs.push_back(train_and_evaluate(cfg, result.manifest, train_set, val_set, variant, supervision,
                                             method_tag(variant, supervision), cfg.out_dir / "models"));
    result.records.insert(result.records.end(), result.runs.back().records.begin(), result.runs.back().records.end());
  }
  const auto oracle = evaluation::evaluate_oracle(result.manifest, "oracle");
  result.records.insert(result.records.end(), oracle.begin(), oracle.end());
  result.summary = evaluation::summarize(result.records, {"method"});

  evaluation::write_records_csv(result.records, cfg.out_dir / "records.csv");
  evaluation::write_summary_csv(result.summary, cfg.out_dir / "summary.csv");
  evaluation::write_plot_data(result.summary, cfg.out_dir / "plot_data.json");
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : result.runs)
    runs.push_back({{"run_id", r.run_id}, {"method", r.method}, {"model", r.model_path.string()},
                    {"history", r.history.summary()}, {"seconds", r.seconds}});
  write_json(cfg.out_dir / "provenance.json",
             {{"study", "compare"}, {"classes", classes.spec()}, {"config", cfg.to_json()}, {"runs", runs}});
  return result;
}

struct SweepResult {
  std::vector<RunOutcome> runs;
  std::map<std::string, std::string> class_set_of_run;  // run id -> a:b
  std::vector<evaluation::EvalRecord> records;          // run_id encodes K and class set
  evaluation::Summary by_k;                             // grouped by "k"
  std::map<std::size_t, double> median_sdr;             // K -> median VAE-class SDR
  double spread() const {
    double lo = 1e300, hi = -1e300;
    for (const auto& [k, m] : median_sdr) {
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    return hi - lo;
  }
};

/// Class sets for the sweep: K=3 uses three disjoint sets, larger K uses C_{0:K}.
inline std::vector<dataset::ClassSet> sweep_sets(std::size_t k) {
  if (k == 3) return {dataset::ClassSet(0, 3), dataset::ClassSet(3, 6), dataset::ClassSet(6, 9)};
  return {dataset::ClassSet(0, static_cast<int>(k))};
}

/// VAE with class supervision trained per class count; K=3 pools the three disjoint sets.
inline SweepResult run_sweep(const ExperimentConfig& cfg, const std::vector<std::size_t>& ks,
                             const std::vector<dataset::ClassSet>& k3_sets = sweep_sets(3)) {
  SweepResult result;
  for (std::size_t k : ks) {
    const auto sets = k == 3 ? k3_sets : sweep_sets(k);
    std::vector<evaluation::EvalRecord> pooled;
    for (const auto& set : sets) {
      const std::string id = "K" + std::to_string(k) + "_C" + std::to_string(set.begin()) + "-" + std::to_string(set.end());
      const auto dir = cfg.out_dir / id;
      const auto manifest = prepare_dataset(cfg, set, dir / "data");
      const auto train_set = training::load_spectrograms(manifest, dataset::Partition::train, false, cfg.threads);
      const auto val_set = training::load_spectrograms(manifest, dataset::Partition::val, false, cfg.threads);
      auto run = train_and_evaluate(cfg, manifest, train_set, val_set, sepmodel::Variant::vae,
                                    sepmodel::Supervision::class_label, id, dir / "models");
      for (auto r : run.records) {
        r.run_id = "K" + std::to_string(k);
        pooled.push_back(r);
      }
      result.records.insert(result.records.end(), run.records.begin(), run.records.end());
      result.class_set_of_run[id] = set.spec();
      result.runs.push_back(std::move(run));
    }
    result.median_sdr[k] = evaluation::median([&] {
      std::vector<double> v;
      for (const auto& r : pooled)
        if (std::isfinite(r.sdr)) v.push_back(r.sdr);
      return v;
    }());
  }
  std::vector<evaluation::EvalRecord> by_k;
  for (auto r : result.records) {
    r.run_id = r.run_id.substr(0, r.run_id.find('_'));
    by_k.push_back(r);
  }
  result.by_k = evaluation::summarize(by_k, {"run_id"});
  evaluation::write_records_csv(result.records, cfg.out_dir / "records.csv");
  evaluation::write_summary_csv(result.by_k, cfg.out_dir / "summary_by_k.csv");
  evaluation::write_plot_data(result.by_k, cfg.out_dir / "plot_data.json");
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : result.runs)
    runs.push_back({{"run_id", r.run_id}, {"classes", result.class_set_of_run.at(r.run_id)},
                    {"model", r.model_path.string()}, {"history", r.history.summary()}, {"seconds", r.seconds}});
  nlohmann::json medians = nlohmann::json::object();
  for (const auto& [k, m] : result.median_sdr) medians[std::to_string(k)] = m;
  write_json(cfg.out_dir / "provenance.json",
             {{"study", "sweep"}, {"ks", ks}, {"config", cfg.to_json()}, {"runs", runs}, {"median_sdr_by_k", medians}});
  return result;
}

}  // namespace weaksep::cli
