#pragma once

#include <type_traits>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "weaksep/sepmodel/model_bundle.hpp"

namespace weaksep::sepmodel {

/// A mini-batch of mixtures with their class-presence labels. `sources` holds
/// one [N, frames, bins, 1] tensor per class and is only populated for signal
/// supervision; rows of classes absent from a mixture are ignored.
template <class T>
struct Batch {
  Tensor<T> mixtures;
  std::vector<std::vector<int>> h;
  std::vector<Tensor<T>> sources;

  std::size_t size() const { return mixtures.empty() ? 0 : mixtures.dim(0); }
};

/// Batch means. total = reconstruction + beta * kl.
struct LossTerms {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

template <class T>
struct LossResult {
  LossTerms terms;
  std::vector<std::vector<std::size_t>> rows;                 // active rows per class
  std::vector<typename ClassAutoencoder<T>::Forward> forward;  // per class, over `rows`
  Tensor<T> mixture_estimate;                                  // gated sum (class supervision)
};

namespace detail {

inline void check_labels(const std::vector<std::vector<int>>& h, std::size_t n, std::size_t k) {
  if (h.size() != n) throw ShapeError("loss: " + std::to_string(h.size()) + " label vectors for " + std::to_string(n) + " mixtures");
  for (const auto& row : h) {
    if (row.size() != k) throw ShapeError("loss: label vector has " + std::to_string(row.size()) + " entries, model has " + std::to_string(k) + " classes");
    std::size_t active = 0;
    for (int v : row) {
      if (v != 0 && v != 1) throw std::invalid_argument("loss: labels must be 0 or 1");
      active += static_cast<std::size_t>(v);
    }
    if (active == 0) throw std::invalid_argument("loss: mixture with no active class");
  }
}

}  // namespace detail

/// Evaluates the separation objective on a batch and, when `backprop` is set,
/// accumulates parameter gradients of the batch-mean loss.
///
/// Only classes present in a mixture are run on it. Class supervision scores
/// the gated sum against the mixture; signal supervision scores each active
/// class against its own reference. The VAE adds beta times the Gaussian KL
/// of every active posterior. `noise` holds one [N, latent] standard-normal
/// tensor per class and is required for the VAE in train mode.
template <class T>
LossResult<T> compute_loss(ModelBundle<T>& model, const Batch<T>& batch, Supervision supervision, Mode mode,
                           const std::type_identity_t<std::vector<Tensor<T>>>* noise, bool backprop) {
  const std::size_t n = batch.size();
  const std::size_t classes = model.size();
  const auto& arch = model.architecture();
  if (n == 0) throw std::invalid_argument("loss: empty batch");
  nn::require_shape(batch.mixtures.shape(), {n, arch.frames, arch.bins, 1}, "loss(mixtures)");
  detail::check_labels(batch.h, n, classes);
  const bool vae = model.variant() == Variant::vae;
  if (vae && mode == Mode::train && (noise == nullptr || noise->size() != classes)) {
    throw std::invalid_argument("loss: VAE training needs one noise tensor per class");
  }

  LossResult<T> result;
  result.rows.resize(classes);
  result.forward.resize(classes);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < classes; ++k)
      if (batch.h[i][k]) result.rows[k].push_back(i);

  if (supervision == Supervision::signal) {
    if (batch.sources.size() != classes) {
      throw std::invalid_argument("loss: signal supervision needs a ground-truth source for every active class");
    }
    for (std::size_t k = 0; k < classes; ++k) {
      if (!result.rows[k].empty() && batch.sources[k].shape() != batch.mixtures.shape()) {
        throw std::invalid_argument("loss: missing ground-truth source for class " + std::to_string(model.labels()[k]));
      }
    }
  }

  const std::size_t bins = arch.frames * arch.bins;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<Tensor<T>> grad_estimate(classes);

  for (std::size_t k = 0; k < classes; ++k) {
    if (result.rows[k].empty()) continue;
    const auto x = nn::gather_rows(batch.mixtures, result.rows[k]);
    Tensor<T> eps;
    if (vae && mode == Mode::train) {
      nn::require_shape((*noise)[k].shape(), {n, arch.latent}, "loss(noise)");
      eps = nn::gather_rows((*noise)[k], result.rows[k]);
    }
    result.forward[k] = model.at(k).forward(x, mode, eps.empty() ? nullptr : &eps);
  }

  double reconstruction = 0.0;
  if (supervision == Supervision::class_label) {
    result.mixture_estimate = Tensor<T>(batch.mixtures.shape());
    for (std::size_t k = 0; k < classes; ++k) {
      const auto& rows = result.rows[k];
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const T* src = result.forward[k].estimate.data() + r * bins;
        T* dst = result.mixture_estimate.data() + rows[r] * bins;
        for (std::size_t i = 0; i < bins; ++i) dst[i] += src[i];
      }
    }
    Tensor<T> grad_mix(batch.mixtures.shape());
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const T> target(batch.mixtures.data() + i * bins, bins);
      std::span<const T> estimate(result.mixture_estimate.data() + i * bins, bins);
      reconstruction += gkl(target, estimate);
      if (backprop) gkl_gradient(target, estimate, inv_n, std::span<T>(grad_mix.data() + i * bins, bins));
    }
    if (backprop) {
      for (std::size_t k = 0; k < classes; ++k)
        if (!result.rows[k].empty()) grad_estimate[k] = nn::gather_rows(grad_mix, result.rows[k]);
    }
  } else {
    for (std::size_t k = 0; k < classes; ++k) {
      const auto& rows = result.rows[k];
      if (rows.empty()) continue;
      if (backprop) grad_estimate[k] = Tensor<T>(result.forward[k].estimate.shape());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        std::span<const T> target(batch.sources[k].data() + rows[r] * bins, bins);
        std::span<const T> estimate(result.forward[k].estimate.data() + r * bins, bins);
        reconstruction += gkl(target, estimate);
        if (backprop) gkl_gradient(target, estimate, inv_n, std::span<T>(grad_estimate[k].data() + r * bins, bins));
      }
    }
  }

  double kl = 0.0;
  std::vector<Tensor<T>> grad_mu(classes), grad_log_var(classes);
  if (vae) {
    const std::size_t j = arch.latent;
    for (std::size_t k = 0; k < classes; ++k) {
      if (result.rows[k].empty()) continue;
      const auto& latent = result.forward[k].latent;
      if (backprop) {
        grad_mu[k] = Tensor<T>(latent.mu.shape());
        grad_log_var[k] = Tensor<T>(latent.log_var.shape());
      }
      for (std::size_t r = 0; r < result.rows[k].size(); ++r) {
        std::span<const T> mu(latent.mu.data() + r * j, j);
        std::span<const T> lv(latent.log_var.data() + r * j, j);
        kl += gaussian_kl(mu, lv);
        if (backprop) {
          gaussian_kl_gradient(mu, lv, model.beta() * inv_n, std::span<T>(grad_mu[k].data() + r * j, j),
                               std::span<T>(grad_log_var[k].data() + r * j, j));
        }
      }
    }
  }

  result.terms.reconstruction = reconstruction * inv_n;
  result.terms.kl = kl * inv_n;
  result.terms.total = result.terms.reconstruction + model.beta() * result.terms.kl;

  if (backprop) {
    for (std::size_t k = 0; k < classes; ++k) {
      if (result.rows[k].empty()) continue;
      model.at(k).backward(grad_estimate[k], vae ? &grad_mu[k] : nullptr, vae ? &grad_log_var[k] : nullptr);
    }
  }
  return result;
}

/// Mixture reconstruction plus beta-weighted KL, using only class labels.
template <class T>
LossTerms loss_class_supervised(ModelBundle<T>& model, const Batch<T>& batch, const std::type_identity_t<std::vector<Tensor<T>>>* noise,
                                Mode mode = Mode::train, bool backprop = false) {
  return compute_loss(model, batch, Supervision::class_label, mode, noise, backprop).terms;
}

/// Per-class reconstruction against the isolated sources (plus beta * KL for the VAE).
template <class T>
LossTerms loss_signal_supervised(ModelBundle<T>& model, const Batch<T>& batch, const std::type_identity_t<std::vector<Tensor<T>>>* noise,
                                 Mode mode = Mode::train, bool backprop = false) {
  return compute_loss(model, batch, Supervision::signal, mode, noise, backprop).terms;
}

}  // namespace weaksep::sepmodel
