#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "weaksep/cli/experiment.hpp"
#include "weaksep/cli/npy.hpp"

namespace weaksep::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

namespace detail {

inline std::vector<int> parse_labels(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) throw UsageError("bad label list '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("empty label list");
  return out;
}

inline void require_labels(const sepmodel::ModelBundle<float>& model, const std::vector<int>& labels) {
  for (int label : labels)
    if (std::find(model.labels().begin(), model.labels().end(), label) == model.labels().end())
      throw UsageError("model has no class " + std::to_string(label));
}

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw DataError(what + " not found: " + p.string());
}

inline void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw DataError(what + " is not a directory: " + p.string());
}

/// Method tag stored by the trainer, e.g. "vae-class".
inline std::string method_of(const nn::Checkpoint& ckpt) {
  const auto& h = ckpt.header;
  if (h.contains("training") && h["training"].contains("config")) {
    const auto& c = h["training"]["config"];
    return c.value("variant", "?") + "-" + c.value("supervision", "?");
  }
  return h.value("variant", "model");
}

/// Splits a long mixture into model-sized windows laid end to end on the
/// inverse-STFT grid, separates each, and stitches the outputs.
inline std::vector<dsp::Waveform> separate_long(sepmodel::ModelBundle<float>& model, const dsp::Waveform& mixture,
                                                const std::vector<int>& labels) {
  const std::size_t window = dataset::kClipSamples;
  const std::size_t covered = (dsp::frame_count(window, dsp::kWindowSize, dsp::kHop) - 1) * dsp::kHop + dsp::kWindowSize;
  std::vector<dsp::Waveform> out(labels.size(), dsp::Waveform(std::vector<double>(mixture.size(), 0.0), mixture.sample_rate));
  for (std::size_t start = 0; start < mixture.size(); start += covered) {
    dsp::Waveform chunk(std::vector<double>(window, 0.0), mixture.sample_rate);
    for (std::size_t t = 0; t < window && start + t < mixture.size(); ++t) chunk.samples[t] = mixture.samples[start + t];
    const auto parts = evaluation::separate(model, chunk, labels);
    for (std::size_t k = 0; k < labels.size(); ++k)
      for (std::size_t t = 0; t < covered && start + t < mixture.size(); ++t) out[k].samples[start + t] = parts[k].samples[t];
  }
  return out;
}

}  // namespace detail

struct Globals {
  unsigned threads = 1;
  std::string runs_root = "runs";
  std::string run_id;
  int verbose = 0;
  bool quiet = false;

  fs::path run_dir(const std::string& fallback) const { return fs::path(runs_root) / (run_id.empty() ? fallback : run_id); }
};

inline void add_train_options(CLI::App* cmd, training::TrainConfig& tc) {
  cmd->add_option("--beta", tc.beta, "KL weight")->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch-size", tc.batch_size, "Mixtures per batch")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--eval-every", tc.eval_every, "Iterations between validations")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--patience", tc.patience, "Validations without improvement before stopping")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--lr", tc.adam.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--max-iterations", tc.max_iterations, "Iteration cap")->capture_default_str()->check(CLI::PositiveNumber);
}

/// Runs the command line and returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Weakly supervised source separation with per-class variational autoencoders", "weaksep"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads for data preparation (1 = bit-reproducible)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--runs-root", g.runs_root, "Parent directory of per-run output directories")->capture_default_str();
  app.add_option("--run-id", g.run_id, "Name of this run's output directory");
  app.add_flag("-v,--verbose", g.verbose, "More logging (repeat for debug)");
  app.add_flag("-q,--quiet", g.quiet, "Only warnings and errors");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Check (or generate) a per-class clip corpus and summarize it");
  std::string corpus;
  bool toy = false;
  dataset::ToyCorpusConfig toy_cfg;
  std::string class_text = "0:10";
  prepare->add_option("--corpus", corpus, "Corpus root (one directory per digit)")->envname("WEAKSEP_CORPUS")->required();
  prepare->add_flag("--toy", toy, "Generate the synthetic digit corpus into --corpus first");
  prepare->add_option("--clips-per-class", toy_cfg.clips_per_class, "Synthetic clips per class")->capture_default_str();
  prepare->add_option("--toy-seed", toy_cfg.seed, "Seed of the synthetic corpus")->capture_default_str();
  prepare->add_option("--classes", class_text, "Class range a:b")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "Synthesize a mixture dataset and its manifest");
  dataset::MixtureSpec mspec;
  std::string gains_text = "-6,0,6";
  std::optional<std::size_t> n_train, n_val, n_test;
  bool no_sources = false;
  std::string out_dir;
  synth->add_option("--corpus", corpus, "Corpus root")->envname("WEAKSEP_CORPUS")->required();
  synth->add_option("--classes", class_text, "Class range a:b")->required();
  synth->add_option("--components", mspec.components, "Sources per mixture")->capture_default_str();
  synth->add_option("--train", n_train, "Training mixtures");
  synth->add_option("--val", n_val, "Validation mixtures");
  synth->add_option("--test", n_test, "Test mixtures");
  synth->add_option("--gains", gains_text, "Comma-separated gains in dB of later components relative to the first")
      ->capture_default_str();
  synth->add_option("--seed", mspec.seed, "Sampling seed")->capture_default_str();
  synth->add_flag("--no-sources", no_sources, "Do not store ground-truth component WAVs");
  synth->add_option("--out", out_dir, "Dataset directory (default: the run directory)");

  // train
  auto* train = app.add_subcommand("train", "Train one model bundle on a manifest");
  training::TrainConfig tc;
  std::string manifest_path, variant_text = "vae", supervision_text = "class";
  train->add_option("--manifest", manifest_path, "Mixture manifest")->required();
  train->add_option("--variant", variant_text, "ae or vae")->capture_default_str()->check(CLI::IsMember({"ae", "vae"}));
  train->add_option("--supervision", supervision_text, "signal or class")
      ->capture_default_str()
      ->check(CLI::IsMember({"signal", "class"}));
  train->add_option("--seed", tc.seed, "Initialization and batching seed")->capture_default_str();
  add_train_options(train, tc);
  train->add_option("--out", out_dir, "Output directory (default: the run directory)");

  // separate
  auto* separate = app.add_subcommand("separate", "Separate a mixture WAV into the named classes");
  std::string model_path, mixture_path, labels_text;
  separate->add_option("--model", model_path, "Trained model checkpoint")->required();
  separate->add_option("--mixture", mixture_path, "Mixture WAV (8 kHz or an integer multiple)")->required();
  separate->add_option("--labels", labels_text, "Comma-separated classes present in the mixture")->required();
  separate->add_option("--out", out_dir, "Output directory (default: next to the mixture)");

  // sample
  auto* sample = app.add_subcommand("sample", "Draw magnitude spectrograms from a class decoder's prior");
  int sample_label = 0;
  std::size_t sample_count = 100;
  std::uint64_t sample_seed = 0;
  sample->add_option("--model", model_path, "Trained VAE checkpoint")->required();
  sample->add_option("--label", sample_label, "Class to sample")->required();
  sample->add_option("--count", sample_count, "Number of samples")->capture_default_str()->check(CLI::PositiveNumber);
  sample->add_option("--seed", sample_seed, "Prior sampling seed")->capture_default_str();
  sample->add_option("--out", out_dir, "Output directory (default: the run directory)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score models (and the oracle mask) on a manifest's test partition");
  std::vector<std::string> models, methods;
  bool oracle = false;
  evaluate->add_option("--manifest", manifest_path, "Mixture manifest with ground-truth sources")->required();
  evaluate->add_option("--model", models, "Model checkpoint (repeatable)");
  evaluate->add_option("--method", methods, "Method tag per --model (default: from the checkpoint)");
  evaluate->add_flag("--oracle", oracle, "Also score the oracle Wiener mask");
  evaluate->add_option("--out", out_dir, "Output directory (default: the run directory)");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "Reproduce the method comparison or the class-count sweep");
  std::string study;
  bool full_scale = false, reuse = false;
  std::vector<std::size_t> ks;
  std::uint64_t exp_seed = 0;
  experiment->add_option("--study", study, "compare or sweep")->required()->check(CLI::IsMember({"compare", "sweep"}));
  experiment->add_option("--corpus", corpus, "Corpus root")->envname("WEAKSEP_CORPUS");
  experiment->add_flag("--toy", toy, "Generate and use the synthetic digit corpus inside the run directory");
  experiment->add_flag("--paper-scale", full_scale, "15000/1875/1875 mixtures and K = 3..10");
  experiment->add_option("--classes", class_text, "Class range for compare")->capture_default_str();
  experiment->add_option("--ks", ks, "Class counts for sweep (default 3 4 5, or 3..10 with --paper-scale)");
  experiment->add_option("--train", n_train, "Training mixtures");
  experiment->add_option("--val", n_val, "Validation mixtures");
  experiment->add_option("--test", n_test, "Test mixtures");
  experiment->add_option("--seed", exp_seed, "Dataset and training seed")->capture_default_str();
  experiment->add_flag("--reuse", reuse, "Reuse datasets and finished models already in the run directory");
  add_train_options(experiment, tc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    err << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    err << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << (app.get_subcommands().empty() ? app.help() : app.get_subcommands()[0]->help());
    return kUsage;
  }
  log::set_level(g.quiet ? log::Level::warn : g.verbose >= 2 ? log::Level::debug : log::Level::info);

  try {
    if (*prepare) {
      const auto classes = dataset::ClassSet::parse(class_text);
      const fs::path root = corpus;
      if (toy) {
        toy_cfg.classes = classes.labels();
        log::info("generating synthetic corpus in " + root.string());
        dataset::generate_toy_corpus(root, toy_cfg);
      }
      detail::require_dir(root, "corpus root");
      const auto c = dataset::load_corpus(root, classes.labels());
      nlohmann::json summary{{"root", fs::absolute(root).string()}, {"mean_train_rms", c.mean_train_rms()}};
      for (int label : c.labels()) {
        nlohmann::json parts;
        for (auto p : dataset::kPartitions) parts[dataset::to_string(p)] = c.pool(label, p).size();
        summary["classes"][std::to_string(label)] = parts;
      }
      const auto out = g.run_dir("prepare") / "corpus_summary.json";
      write_json(out, summary);
      log::info("corpus summary written to " + out.string());
      return kOk;
    }

    if (*synth) {
      mspec.classes = dataset::ClassSet::parse(class_text);
      mspec.gains_db.clear();
      std::stringstream ss(gains_text);
      for (std::string item; std::getline(ss, item, ',');) mspec.gains_db.push_back(std::stod(item));
      if (n_train || n_val || n_test) mspec.counts = {n_train.value_or(0), n_val.value_or(0), n_test.value_or(0)};
      mspec.validate();
      detail::require_dir(corpus, "corpus root");
      const fs::path dir = out_dir.empty() ? g.run_dir("synth-" + std::to_string(mspec.seed)) : fs::path(out_dir);
      const auto c = dataset::load_corpus(corpus, mspec.classes.labels());
      const auto examples = dataset::synthesize(mspec, c, g.threads);
      const auto m = dataset::write_dataset(examples, mspec.classes.labels(), dir, dataset::to_json(mspec), !no_sources);
      log::info(std::to_string(m.records.size()) + " mixtures, manifest " + m.path.string());
      return kOk;
    }

    if (*train) {
      detail::require_file(manifest_path, "manifest");
      tc.variant = sepmodel::parse_variant(variant_text);
      tc.supervision = sepmodel::parse_supervision(supervision_text);
      tc.run_id = g.run_id.empty() ? method_tag(tc.variant, tc.supervision) : g.run_id;
      tc.checkpoint_dir = out_dir.empty() ? g.run_dir(tc.run_id) : fs::path(out_dir);
      const auto manifest = dataset::read_manifest(manifest_path);
      const bool signal = tc.supervision == sepmodel::Supervision::signal;
      const auto train_set = training::load_spectrograms(manifest, dataset::Partition::train, signal, g.threads);
      const auto val_set = training::load_spectrograms(manifest, dataset::Partition::val, signal, g.threads);
      if (train_set.size() == 0) throw DataError("manifest " + manifest.path.string() + " has no training mixtures");
      if (val_set.size() == 0) throw DataError("manifest " + manifest.path.string() + " has no validation mixtures");
      sepmodel::ModelBundle<float> model(manifest.labels, tc.variant, sepmodel::Architecture{}, tc.beta, tc.seed);
      const auto history = training::train<float>(model, train_set, val_set, tc);
      auto ckpt = model.to_checkpoint();
      ckpt.header["training"] = {{"config", tc.to_json()}, {"history", history.summary()}, {"manifest", manifest.path.string()}};
      const auto model_out = tc.checkpoint_dir / (tc.run_id + ".model.ckpt");
      nn::write_checkpoint(model_out, ckpt);
      log::info("best iteration " + std::to_string(history.best_iteration) + ", model " + model_out.string());
      return kOk;
    }

    if (*separate) {
      detail::require_file(model_path, "model");
      detail::require_file(mixture_path, "mixture");
      const auto labels = detail::parse_labels(labels_text);
      auto model = sepmodel::ModelBundle<float>::load(model_path);
      detail::require_labels(model, labels);
      const auto mixture = dsp::resample_to(dsp::read_wav(mixture_path), dsp::kModelSampleRate);
      const auto parts = detail::separate_long(model, mixture, labels);
      const fs::path in = mixture_path;
      const fs::path dir = out_dir.empty() ? in.parent_path() : fs::path(out_dir);
      for (std::size_t k = 0; k < labels.size(); ++k) {
        const auto path = dir / (in.stem().string() + ".source" + std::to_string(labels[k]) + ".wav");
        dsp::write_wav(path, parts[k]);
        log::info("wrote " + path.string());
      }
      return kOk;
    }

    if (*sample) {
      detail::require_file(model_path, "model");
      auto model = sepmodel::ModelBundle<float>::load(model_path);
      detail::require_labels(model, {sample_label});
      auto& decoder = model.at(model.index_of(sample_label));
      std::mt19937_64 rng(sample_seed);
      std::normal_distribution<double> normal;
      nn::Tensor<float> z({sample_count, model.architecture().latent});
      for (auto& v : z.values()) v = static_cast<float>(normal(rng));
      const auto specs = sepmodel::sample_source(decoder, z);
      std::vector<float> flat;
      for (const auto& s : specs) flat.insert(flat.end(), s.values().begin(), s.values().end());
      const fs::path dir = out_dir.empty() ? g.run_dir("sample") : fs::path(out_dir);
      const auto path = dir / ("samples_class" + std::to_string(sample_label) + ".npy");
      write_npy(path, {sample_count, model.architecture().frames, model.architecture().bins}, flat);
      log::info("wrote " + path.string());
      return kOk;
    }

    if (*evaluate) {
      detail::require_file(manifest_path, "manifest");
      for (const auto& m : models) detail::require_file(m, "model");
      if (!methods.empty() && methods.size() != models.size())
        throw UsageError("--method must be given once per --model");
      if (models.empty() && !oracle) throw UsageError("nothing to evaluate: give --model and/or --oracle");
      const auto manifest = dataset::read_manifest(manifest_path);
      if (!manifest.has_sources()) throw DataError("manifest " + manifest.path.string() + " has no ground-truth sources");
      const std::string run_id = g.run_id.empty() ? "evaluate" : g.run_id;
      std::vector<evaluation::EvalRecord> records;
      for (std::size_t i = 0; i < models.size(); ++i) {
        const auto ckpt = nn::read_checkpoint(models[i]);
        auto model = sepmodel::ModelBundle<float>::from_checkpoint(ckpt);
        const auto tag = methods.empty() ? detail::method_of(ckpt) : methods[i];
        const auto r = evaluation::evaluate_model(model, manifest, tag, run_id);
        records.insert(records.end(), r.begin(), r.end());
      }
      if (oracle) {
        const auto r = evaluation::evaluate_oracle(manifest, run_id);
        records.insert(records.end(), r.begin(), r.end());
      }
      if (records.empty()) throw DataError("manifest " + manifest.path.string() + " has no test mixtures");
      const fs::path dir = out_dir.empty() ? g.run_dir(run_id) : fs::path(out_dir);
      const auto summary = evaluation::summarize(records, {"method"});
      evaluation::write_records_csv(records, dir / "records.csv");
      evaluation::write_summary_csv(summary, dir / "summary.csv");
      evaluation::write_plot_data(summary, dir / "plot_data.json");
      log::info("results in " + dir.string());
      return kOk;
    }

    if (*experiment) {
      ExperimentConfig cfg;
      cfg.out_dir = g.run_dir(study + (full_scale ? "-full" : "-desk") + "-" + std::to_string(exp_seed));
      if (toy) {
        cfg.corpus = cfg.out_dir / "toy_corpus";
        if (!fs::exists(cfg.corpus / "validation_list.txt") || !reuse) {
          dataset::ToyCorpusConfig t;
          t.seed = exp_seed + 1;
          dataset::generate_toy_corpus(cfg.corpus, t);
        }
      } else {
        if (corpus.empty()) throw UsageError("experiment needs --corpus (or WEAKSEP_CORPUS, or --toy)");
        cfg.corpus = corpus;
      }
      detail::require_dir(cfg.corpus, "corpus root");
      cfg.counts = full_scale ? full_counts() : desk_counts();
      if (n_train) cfg.counts.train = *n_train;
      if (n_val) cfg.counts.val = *n_val;
      if (n_test) cfg.counts.test = *n_test;
      cfg.seed = exp_seed;
      tc.seed = exp_seed;
      cfg.train = tc;
      cfg.threads = g.threads;
      cfg.reuse = reuse;
      if (study == "compare") {
        const auto r = run_compare(cfg, dataset::ClassSet::parse(class_text));
        for (const auto& row : r.summary.rows)
          log::info(row.key[0] + ": median SDR " + std::to_string(row.sdr_stats.median) + " dB");
      } else {
        if (ks.empty()) ks = full_scale ? std::vector<std::size_t>{3, 4, 5, 6, 7, 8, 9, 10} : std::vector<std::size_t>{3, 4, 5};
        for (auto k : ks)
          if (k < 3 || k > 10) throw UsageError("--ks values must lie in 3..10");
        const auto r = run_sweep(cfg, ks);
        for (const auto& [k, m] : r.median_sdr) log::info("K=" + std::to_string(k) + ": median SDR " + std::to_string(m) + " dB");
      }
      log::info("results in " + cfg.out_dir.string());
      return kOk;
    }
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace weaksep::cli
