#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "weaksep/errors.hpp"
#include "weaksep/nn/tensor.hpp"

namespace weaksep::nn {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators for one ordered list of parameters.
template <class T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  AdamState() = default;
  AdamState(std::span<Parameter<T>* const> params, AdamHyper h = {}) : hyper(h) {
    for (const auto* p : params) {
      m.emplace_back(p->value.shape());
      v.emplace_back(p->value.shape());
    }
  }
};

/// Bias-corrected Adam step. Throws DivergenceError before touching any
/// parameter when a gradient entry is not finite.
template <class T>
void adam_update(std::span<Parameter<T>* const> params, AdamState<T>& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_update: state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_shape(params[i]->grad.shape(), state.m[i].shape(), "adam_update");
    for (T g : params[i]->grad.values()) {
      if (!std::isfinite(g)) throw DivergenceError("diverged: non-finite gradient in " + params[i]->name);
    }
  }
  ++state.step;
  const auto& h = state.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(h.beta1), c1 = static_cast<T>(1.0 - h.beta1);
  const T b2 = static_cast<T>(h.beta2), c2 = static_cast<T>(1.0 - h.beta2);
  const T rate = static_cast<T>(h.lr / bc1), inv_bc2 = static_cast<T>(1.0 / bc2), eps = static_cast<T>(h.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* value = params[i]->value.data();
    const T* grad = params[i]->grad.data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    const std::size_t n = params[i]->value.size();
    for (std::size_t j = 0; j < n; ++j) {
      const T g = grad[j];
      m[j] = b1 * m[j] + c1 * g;
      v[j] = b2 * v[j] + c2 * g * g;
      value[j] -= rate * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

template <class T>
void adam_update(std::vector<Parameter<T>*>& params, AdamState<T>& state) {
  adam_update(std::span<Parameter<T>* const>(params), state);
}

}  // namespace weaksep::nn
