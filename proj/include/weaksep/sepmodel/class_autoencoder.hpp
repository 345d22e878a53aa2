#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "weaksep/dsp/spectrogram.hpp"
#include "weaksep/nn/reparameterize.hpp"
#include "weaksep/nn/sequential.hpp"
#include "weaksep/sepmodel/architecture.hpp"

namespace weaksep::sepmodel {

using nn::Mode;
using nn::Tensor;

template <class T>
Tensor<T> to_tensor(const std::vector<dsp::Spectrogram>& specs) {
  if (specs.empty()) throw std::invalid_argument("to_tensor: no spectrograms");
  const std::size_t t = specs.front().frames(), f = specs.front().bins();
  Tensor<T> out({specs.size(), t, f, 1});
  for (std::size_t n = 0; n < specs.size(); ++n) {
    if (specs[n].frames() != t || specs[n].bins() != f) throw ShapeError("to_tensor: spectrograms differ in shape");
    const auto v = specs[n].values();
    std::copy(v.begin(), v.end(), out.data() + n * t * f);
  }
  return out;
}

template <class T>
dsp::Spectrogram row_spectrogram(const Tensor<T>& batch, std::size_t row) {
  if (batch.rank() != 4) throw ShapeError("row_spectrogram: expected [N,T,F,1], got " + nn::to_string(batch.shape()));
  const std::size_t t = batch.dim(1), f = batch.dim(2);
  dsp::Spectrogram out(t, f);
  auto dst = out.values();
  for (std::size_t i = 0; i < t * f; ++i) dst[i] = static_cast<float>(batch[row * t * f + i]);
  return out;
}

/// Posterior parameters and the latent code fed to the decoder. For the AE
/// variant `mu` holds the deterministic code and `log_var` is empty.
template <class T>
struct LatentState {
  Tensor<T> mu;
  Tensor<T> log_var;
  Tensor<T> z;
};

/// Encoder/decoder pair for one source class. Decoder output is softplus and
/// therefore entrywise non-negative.
template <class T>
class ClassAutoencoder {
 public:
  struct Forward {
    Tensor<T> estimate;  // [N, frames, bins, 1]
    LatentState<T> latent;
  };

  ClassAutoencoder(int label, Variant variant, const Architecture& arch, std::uint64_t seed)
      : label_(label), variant_(variant), arch_(arch) {
    arch.validate();
    std::mt19937_64 rng(seed);
    build_encoder(rng);
    build_decoder(rng);
  }

  ClassAutoencoder(ClassAutoencoder&&) noexcept = default;
  ClassAutoencoder& operator=(ClassAutoencoder&&) noexcept = default;

  int label() const { return label_; }
  Variant variant() const { return variant_; }
  const Architecture& architecture() const { return arch_; }

  /// Encodes `x` ([N, frames, bins, 1]) and decodes a source estimate. The VAE
  /// samples z = mu + sigma * noise in train mode and uses z = mu in eval
  /// mode; `noise` may be null in eval mode or for the AE.
  Forward forward(const Tensor<T>& x, Mode mode, const Tensor<T>* noise = nullptr) {
    nn::require_shape(x.shape(), {x.dim(0), arch_.frames, arch_.bins, 1}, "ClassAutoencoder::forward");
    const std::size_t n = x.dim(0);
    const std::size_t j = arch_.latent;
    Forward out;
    const auto code = encoder_.forward(x, mode);
    if (variant_ == Variant::ae) {
      out.latent.mu = code;
      out.latent.z = code;
      noise_ = Tensor<T>();
    } else {
      out.latent.mu = Tensor<T>({n, j});
      out.latent.log_var = Tensor<T>({n, j});
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t u = 0; u < j; ++u) {
          out.latent.mu[r * j + u] = code[r * 2 * j + u];
          out.latent.log_var[r * j + u] = code[r * 2 * j + j + u];
        }
      if (mode == Mode::train && noise != nullptr) {
        noise_ = *noise;
        out.latent.z = nn::reparameterize(out.latent.mu, out.latent.log_var, noise_);
      } else {
        if (mode == Mode::train) throw std::invalid_argument("ClassAutoencoder: train mode requires noise");
        noise_ = Tensor<T>({n, j});
        out.latent.z = out.latent.mu;
      }
      log_var_ = out.latent.log_var;
    }
    out.estimate = decoder_.forward(out.latent.z, mode);
    return out;
  }

  /// Back-propagates dL/destimate plus any direct loss terms on mu and
  /// log_var (the KL regularizer) into the parameter gradients.
  void backward(const Tensor<T>& grad_estimate, const Tensor<T>* grad_mu = nullptr,
                const Tensor<T>* grad_log_var = nullptr) {
    const auto grad_z = decoder_.backward(grad_estimate);
    if (variant_ == Variant::ae) {
      encoder_.backward(grad_z);
      return;
    }
    auto g = nn::reparameterize_backward(grad_z, log_var_, noise_);
    if (grad_mu != nullptr) {
      nn::require_shape(grad_mu->shape(), g.mu.shape(), "ClassAutoencoder::backward(mu)");
      for (std::size_t i = 0; i < g.mu.size(); ++i) g.mu[i] += (*grad_mu)[i];
    }
    if (grad_log_var != nullptr) {
      nn::require_shape(grad_log_var->shape(), g.log_var.shape(), "ClassAutoencoder::backward(log_var)");
      for (std::size_t i = 0; i < g.log_var.size(); ++i) g.log_var[i] += (*grad_log_var)[i];
    }
    const std::size_t n = g.mu.dim(0), j = arch_.latent;
    Tensor<T> grad_code({n, 2 * j});
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t u = 0; u < j; ++u) {
        grad_code[r * 2 * j + u] = g.mu[r * j + u];
        grad_code[r * 2 * j + j + u] = g.log_var[r * j + u];
      }
    encoder_.backward(grad_code);
  }

  /// Runs only the decoder, in eval mode, on latent codes [N, latent].
  Tensor<T> decode(const Tensor<T>& z) {
    nn::require_shape(z.shape(), {z.dim(0), arch_.latent}, "ClassAutoencoder::decode");
    return decoder_.forward(z, Mode::eval);
  }

  std::vector<nn::Parameter<T>*> parameters() {
    auto out = encoder_.parameters();
    for (auto* p : decoder_.parameters()) out.push_back(p);
    return out;
  }

  std::vector<nn::Buffer<T>> buffers() {
    auto out = encoder_.buffers();
    for (auto b : decoder_.buffers()) out.push_back(b);
    return out;
  }

  void zero_grad() {
    encoder_.zero_grad();
    decoder_.zero_grad();
  }

  void set_batch_norm_frozen(bool frozen) {
    for (auto* seq : {&encoder_, &decoder_})
      for (std::size_t i = 0; i < seq->size(); ++i)
        if (auto* bn = dynamic_cast<nn::BatchNorm<T>*>(&seq->layer(i))) bn->set_frozen(frozen);
  }

  std::vector<nn::LayerSpec> encoder_specs() const { return encoder_.specs(); }
  std::vector<nn::LayerSpec> decoder_specs() const { return decoder_.specs(); }

 private:
  void build_encoder(std::mt19937_64& rng) {
    using namespace nn;
    const auto& a = arch_;
    auto& conv1 = encoder_.add("encoder.conv1", std::make_unique<Conv2d<T>>(1, a.conv1_filters, Window{1, a.bins},
                                                                           Window{1, 1}, rng));
    conv1.set_propagate_input_grad(false);
    encoder_.add("encoder.bn1", std::make_unique<BatchNorm<T>>(a.conv1_filters));
    encoder_.add("encoder.relu1", std::make_unique<ReLU<T>>());
    encoder_.add("encoder.conv2", std::make_unique<Conv2d<T>>(a.conv1_filters, a.conv2_filters,
                                                              Window{a.time_kernel, 1}, Window{a.time_stride, 1}, rng));
    encoder_.add("encoder.bn2", std::make_unique<BatchNorm<T>>(a.conv2_filters));
    encoder_.add("encoder.relu2", std::make_unique<ReLU<T>>());
    encoder_.add("encoder.conv3", std::make_unique<Conv2d<T>>(a.conv2_filters, a.conv3_filters,
                                                              Window{a.time_kernel, 1}, Window{a.time_stride, 1}, rng));
    encoder_.add("encoder.bn3", std::make_unique<BatchNorm<T>>(a.conv3_filters));
    encoder_.add("encoder.relu3", std::make_unique<ReLU<T>>());
    encoder_.add("encoder.fc", std::make_unique<FullyConnected<T>>(a.flat_features(), a.fc_units, rng));
    encoder_.add("encoder.bn4", std::make_unique<BatchNorm<T>>(a.fc_units));
    encoder_.add("encoder.relu4", std::make_unique<ReLU<T>>());
    if (variant_ == Variant::vae) {
      encoder_.add("encoder.gauss", std::make_unique<GaussianLatent<T>>(a.fc_units, a.latent, rng));
    } else {
      encoder_.add("encoder.latent", std::make_unique<FullyConnected<T>>(a.fc_units, a.latent, rng));
    }
  }

  void build_decoder(std::mt19937_64& rng) {
    using namespace nn;
    const auto& a = arch_;
    decoder_.add("decoder.fc1", std::make_unique<FullyConnected<T>>(a.latent, a.fc_units, rng));
    decoder_.add("decoder.bn1", std::make_unique<BatchNorm<T>>(a.fc_units));
    decoder_.add("decoder.relu1", std::make_unique<ReLU<T>>());
    decoder_.add("decoder.fc2", std::make_unique<FullyConnected<T>>(a.fc_units, a.flat_features(), rng));
    decoder_.add("decoder.bn2", std::make_unique<BatchNorm<T>>(a.flat_features()));
    decoder_.add("decoder.relu2", std::make_unique<ReLU<T>>());
    decoder_.add("decoder.reshape", std::make_unique<Reshape<T>>(Shape{a.frames_after_conv3(), 1, a.conv3_filters}));
    decoder_.add("decoder.tconv3", std::make_unique<ConvTranspose2d<T>>(
                                       a.conv3_filters, a.conv2_filters, Window{a.time_kernel, 1},
                                       Window{a.time_stride, 1}, rng));
    decoder_.add("decoder.bn3", std::make_unique<BatchNorm<T>>(a.conv2_filters));
    decoder_.add("decoder.relu3", std::make_unique<ReLU<T>>());
    decoder_.add("decoder.tconv2", std::make_unique<ConvTranspose2d<T>>(
                                       a.conv2_filters, a.conv1_filters, Window{a.time_kernel, 1},
                                       Window{a.time_stride, 1}, rng));
    decoder_.add("decoder.bn4", std::make_unique<BatchNorm<T>>(a.conv1_filters));
    decoder_.add("decoder.relu4", std::make_unique<ReLU<T>>());
    decoder_.add("decoder.tconv1",
                 std::make_unique<ConvTranspose2d<T>>(a.conv1_filters, 1, Window{1, a.bins}, Window{1, 1}, rng));
    decoder_.add("decoder.softplus", std::make_unique<Softplus<T>>());
  }

  int label_;
  Variant variant_;
  Architecture arch_;
  nn::Sequential<T> encoder_;
  nn::Sequential<T> decoder_;
  Tensor<T> log_var_;
  Tensor<T> noise_;
};

/// Single-example convenience wrapper around ClassAutoencoder::forward.
template <class T>
std::pair<dsp::Spectrogram, LatentState<T>> estimate_source(ClassAutoencoder<T>& model, const dsp::Spectrogram& x,
                                                            Mode mode, const std::vector<T>& noise = {}) {
  const auto& a = model.architecture();
  if (x.frames() != a.frames || x.bins() != a.bins) {
    throw ShapeError("estimate_source: model expects " + std::to_string(a.frames) + "x" + std::to_string(a.bins) +
                     ", got " + std::to_string(x.frames()) + "x" + std::to_string(x.bins()));
  }
  Tensor<T> noise_t;
  if (!noise.empty()) noise_t = Tensor<T>({1, a.latent}, noise);
  auto fwd = model.forward(to_tensor<T>({x}), mode, noise.empty() ? nullptr : &noise_t);
  return {row_spectrogram(fwd.estimate, 0), std::move(fwd.latent)};
}

/// Decodes standard-normal codes [N, latent] into generative samples.
template <class T>
std::vector<dsp::Spectrogram> sample_source(ClassAutoencoder<T>& model, const Tensor<T>& noise) {
  if (model.variant() != Variant::vae) {
    throw std::invalid_argument("sample_source: class " + std::to_string(model.label()) +
                                " is a plain autoencoder and has no prior to sample from");
  }
  const auto out = model.decode(noise);
  std::vector<dsp::Spectrogram> samples;
  for (std::size_t r = 0; r < out.dim(0); ++r) samples.push_back(row_spectrogram(out, r));
  return samples;
}

}  // namespace weaksep::sepmodel
