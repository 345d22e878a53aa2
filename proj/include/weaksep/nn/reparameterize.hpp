#pragma once

#include <cmath>

#include "weaksep/nn/tensor.hpp"

namespace weaksep::nn {

/// z = mu + exp(log_var / 2) * noise, elementwise.
template <class T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& log_var, const Tensor<T>& noise) {
  require_shape(log_var.shape(), mu.shape(), "reparameterize(log_var)");
  require_shape(noise.shape(), mu.shape(), "reparameterize(noise)");
  Tensor<T> z(mu.shape());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + std::exp(log_var[i] / T{2}) * noise[i];
  return z;
}

template <class T>
struct ReparameterizeGrad {
  Tensor<T> mu;
  Tensor<T> log_var;
};

template <class T>
ReparameterizeGrad<T> reparameterize_backward(const Tensor<T>& grad_z, const Tensor<T>& log_var,
                                              const Tensor<T>& noise) {
  require_shape(log_var.shape(), grad_z.shape(), "reparameterize_backward(log_var)");
  require_shape(noise.shape(), grad_z.shape(), "reparameterize_backward(noise)");
  ReparameterizeGrad<T> out{grad_z, Tensor<T>(grad_z.shape())};
  for (std::size_t i = 0; i < grad_z.size(); ++i) {
    out.log_var[i] = grad_z[i] * noise[i] * std::exp(log_var[i] / T{2}) / T{2};
  }
  return out;
}

}  // namespace weaksep::nn
