#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "weaksep/log.hpp"
#include "weaksep/training/data.hpp"

namespace weaksep::training {

using sepmodel::ModelBundle;
using sepmodel::Variant;

struct TrainConfig {
  double beta = 10.0;
  std::size_t batch_size = 100;
  std::size_t eval_every = 200;
  std::size_t patience = 10;
  nn::AdamHyper adam;
  std::uint64_t seed = 0;
  Variant variant = Variant::vae;
  Supervision supervision = Supervision::class_label;
  std::size_t max_iterations = 50000;
  std::string run_id = "run";
  /// Where `{run_id}.best.ckpt`, `{run_id}.last.ckpt` and `{run_id}.history.csv` go; empty disables files.
  std::filesystem::path checkpoint_dir;

  void validate() const {
    if (batch_size < 1 || eval_every < 1 || patience < 1 || max_iterations < 1)
      throw std::invalid_argument("TrainConfig: batch_size, eval_every, patience and max_iterations must be >= 1");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("TrainConfig: beta must be >= 0");
    if (!(adam.lr > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
  }

  nlohmann::json to_json() const {
    return {{"beta", beta},
            {"batch_size", batch_size},
            {"eval_every", eval_every},
            {"patience", patience},
            {"lr", adam.lr},
            {"adam_beta1", adam.beta1},
            {"adam_beta2", adam.beta2},
            {"adam_eps", adam.eps},
            {"seed", seed},
            {"variant", sepmodel::to_string(variant)},
            {"supervision", sepmodel::to_string(supervision)},
            {"max_iterations", max_iterations},
            {"run_id", run_id}};
  }
};

struct EvalPoint {
  std::size_t iteration = 0;
  double train_loss = 0.0;  // mean training objective since the previous evaluation
  double val_loss = 0.0;    // validation reconstruction loss
  double seconds = 0.0;     // wall clock since training started
};

enum class StopReason { patience, max_iterations, diverged };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::patience: return "patience";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::diverged: return "diverged";
  }
  return "?";
}

struct TrainHistory {
  std::vector<EvalPoint> records;
  std::size_t best_iteration = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  StopReason stop_reason = StopReason::max_iterations;
  std::size_t iterations = 0;
  double initial_train_loss = 0.0;  // objective of the very first batch

  void write_csv(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "iteration,train_loss,val_loss,timestamp\n";
    out.precision(17);
    for (const auto& r : records) out << r.iteration << ',' << r.train_loss << ',' << r.val_loss << ',' << r.seconds << '\n';
  }

  nlohmann::json summary() const {
    return {{"best_iteration", best_iteration},
            {"best_val_loss", best_val_loss},
            {"stop_reason", to_string(stop_reason)},
            {"iterations", iterations},
            {"evaluations", records.size()}};
  }
};

/// Mean validation reconstruction loss in eval mode: GKL(X || sum_k h_k S_k) for
/// class supervision, sum_k GKL(S_k || S_k-hat) for signal supervision. No KL term.
template <class T>
double validate(ModelBundle<T>& model, const MixtureSource& val_set, Supervision supervision, std::size_t chunk = 100) {
  if (val_set.size() == 0) throw std::invalid_argument("validate: empty validation set");
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < val_set.size(); start += chunk) {
    idx.resize(std::min(chunk, val_set.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto batch = make_batch<T>(val_set, idx, supervision);
    const auto r = sepmodel::compute_loss(model, batch, supervision, nn::Mode::eval, nullptr, false);
    total += r.terms.reconstruction * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(val_set.size());
}

template <class T>
using Validator = std::function<double(ModelBundle<T>&)>;

namespace detail {

template <class T>
void save_checkpoint(ModelBundle<T>& model, const std::vector<nn::AdamState<T>>* adam, const TrainConfig& cfg,
                     const std::filesystem::path& path, const nlohmann::json& extra) {
  auto ckpt = model.to_checkpoint(adam);
  ckpt.header["training"] = {{"config", cfg.to_json()}};
  for (auto it = extra.begin(); it != extra.end(); ++it) ckpt.header["training"][it.key()] = it.value();
  nn::write_checkpoint(path, ckpt);
}

}  // namespace detail

/// Mini-batch Adam training with validation-driven early stopping. On return the
/// model holds the parameters of the best evaluation. A non-finite loss or
/// gradient restores the last good parameters, writes them out and rethrows.
template <class T>
TrainHistory train(ModelBundle<T>& model, const MixtureSource& train_set, const MixtureSource& val_set,
                   const TrainConfig& cfg, Validator<T> validator = {}) {
  cfg.validate();
  if (cfg.variant != model.variant()) throw std::invalid_argument("train: config variant differs from the model's");
  if (train_set.size() == 0) throw DataError("train: empty training set");
  if (train_set.classes() != model.size() || val_set.classes() != model.size())
    throw ShapeError("train: data label vectors do not match the model's class count");
  model.set_beta(cfg.beta);

  const bool signal = cfg.supervision == Supervision::signal;
  if (signal && (!train_set.has_sources() || !val_set.has_sources()))
    throw DataError("signal supervision needs ground-truth sources for every mixture");
  const ClassOnlyView train_view(train_set), val_view(val_set);
  const MixtureSource& train_data = signal ? train_set : static_cast<const MixtureSource&>(train_view);
  const MixtureSource& val_data = signal ? val_set : static_cast<const MixtureSource&>(val_view);
  if (!validator) validator = [&](ModelBundle<T>& m) { return validate(m, val_data, cfg.supervision); };

  const bool files = !cfg.checkpoint_dir.empty();
  const auto best_path = cfg.checkpoint_dir / (cfg.run_id + ".best.ckpt");
  const auto last_path = cfg.checkpoint_dir / (cfg.run_id + ".last.ckpt");
  const auto csv_path = cfg.checkpoint_dir / (cfg.run_id + ".history.csv");

  std::vector<nn::AdamState<T>> adam;
  for (std::size_t k = 0; k < model.size(); ++k) adam.emplace_back(model.at(k).parameters(), cfg.adam);

  std::mt19937_64 order_rng(cfg.seed);
  std::mt19937_64 noise_rng(cfg.seed ^ 0xA5A5A5A5DEADBEEFULL);
  std::normal_distribution<double> normal;
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), order_rng);
  std::size_t cursor = 0;

  TrainHistory history;
  auto best_state = model.state();
  std::size_t since_best = 0;
  double running = 0.0;
  std::size_t running_count = 0;
  const auto start = std::chrono::steady_clock::now();
  const bool vae = model.variant() == Variant::vae;
  std::vector<std::size_t> idx(cfg.batch_size);
  std::vector<nn::Tensor<T>> noise(model.size());

  try {
    for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
      for (auto& i : idx) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), order_rng);
          cursor = 0;
        }
        i = order[cursor++];
      }
      const auto batch = make_batch<T>(train_data, idx, cfg.supervision);
      if (vae) {
        for (auto& t : noise) {
          t = nn::Tensor<T>({cfg.batch_size, model.architecture().latent});
          for (auto& v : t.values()) v = static_cast<T>(normal(noise_rng));
        }
      }
      model.zero_grad();
      const auto result = sepmodel::compute_loss(model, batch, cfg.supervision, nn::Mode::train, vae ? &noise : nullptr, true);
      const double loss = result.terms.total;
      if (!std::isfinite(loss)) throw DivergenceError("diverged: non-finite training loss at iteration " + std::to_string(it));
      if (it == 1) history.initial_train_loss = loss;
      running += loss;
      ++running_count;
      for (std::size_t k = 0; k < model.size(); ++k) {
        if (result.rows[k].empty()) continue;
        auto params = model.at(k).parameters();
        nn::adam_update(params, adam[k]);
      }
      history.iterations = it;

      if (it % cfg.eval_every != 0 && it != cfg.max_iterations) continue;
      EvalPoint point;
      point.iteration = it;
      point.train_loss = running / static_cast<double>(running_count);
      point.val_loss = validator(model);
      point.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      running = 0.0;
      running_count = 0;
      if (!std::isfinite(point.val_loss))
        throw DivergenceError("diverged: non-finite validation loss at iteration " + std::to_string(it));
      history.records.push_back(point);
      log::info(cfg.run_id + ": iteration " + std::to_string(it) + " train " + std::to_string(point.train_loss) +
                " val " + std::to_string(point.val_loss));
      if (point.val_loss < history.best_val_loss) {
        history.best_val_loss = point.val_loss;
        history.best_iteration = it;
        best_state = model.state();
        since_best = 0;
        if (files) detail::save_checkpoint<T>(model, nullptr, cfg, best_path, {{"iteration", it}, {"val_loss", point.val_loss}});
      } else {
        ++since_best;
      }
      if (files) {
        detail::save_checkpoint<T>(model, &adam, cfg, last_path, {{"iteration", it}, {"val_loss", point.val_loss}});
        history.write_csv(csv_path);
      }
      if (since_best >= cfg.patience) {
        history.stop_reason = StopReason::patience;
        break;
      }
      if (it == cfg.max_iterations) history.stop_reason = StopReason::max_iterations;
    }
  } catch (const DivergenceError& e) {
    history.stop_reason = StopReason::diverged;
    model.load_state(best_state);
    if (files) {
      detail::save_checkpoint<T>(model, nullptr, cfg, last_path, {{"diverged", e.what()}});
      history.write_csv(csv_path);
    }
    throw;
  }
  model.load_state(best_state);
  return history;
}

}  // namespace weaksep::training
