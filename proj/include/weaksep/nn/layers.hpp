#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "weaksep/nn/tensor.hpp"

namespace weaksep::nn {

enum class Mode { train, eval };

enum class LayerKind { conv, transposed_conv, fully_connected, batch_norm, relu, softplus, gaussian_latent, reshape };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::transposed_conv: return "transposed_conv";
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::relu: return "relu";
    case LayerKind::softplus: return "softplus";
    case LayerKind::gaussian_latent: return "gaussian_latent";
    case LayerKind::reshape: return "reshape";
  }
  return "unknown";
}

/// Extent along the (time, frequency) axes.
struct Window {
  std::size_t time = 1;
  std::size_t freq = 1;
  friend bool operator==(const Window&, const Window&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in_channels = 0;
  std::size_t filters = 0;  // output channels or units
  Window filter{};
  Window stride{};
  Shape target{};  // per-example shape for reshape
};

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor<T> forward(const Tensor<T>& input, Mode mode) = 0;
  /// Returns dL/dinput and accumulates parameter gradients. Consumes the
  /// activations cached by the preceding forward call.
  virtual Tensor<T> backward(const Tensor<T>& grad_output) = 0;
  virtual LayerSpec spec() const = 0;
  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual std::vector<Buffer<T>> buffers() { return {}; }

  const std::string& name() const { return name_; }
  void set_name(std::string name) {
    name_ = std::move(name);
    for (auto* p : parameters()) p->name = name_ + "." + short_name(p->name);
  }

  /// When false, backward still accumulates parameter gradients but returns an
  /// empty tensor instead of dL/dinput.
  void set_propagate_input_grad(bool v) { propagate_input_grad_ = v; }

 protected:
  void require_cache(bool has_cache) const {
    if (!has_cache) throw std::logic_error("backward called before forward on layer '" + name_ + "'");
  }

  bool propagate_input_grad_ = true;

 private:
  static std::string short_name(const std::string& full) {
    const auto dot = full.rfind('.');
    return dot == std::string::npos ? full : full.substr(dot + 1);
  }

  std::string name_;
};

namespace detail {

/// Geometry of a valid-padding 2-D sliding window over N,H,W,C tensors.
struct Patches {
  std::size_t batch, in_h, in_w, channels;
  std::size_t kh, kw, sh, sw;
  std::size_t out_h, out_w;

  std::size_t rows() const { return batch * out_h * out_w; }
  std::size_t cols() const { return kh * kw * channels; }
};

inline std::size_t valid_out(std::size_t in, std::size_t k, std::size_t s, const char* axis) {
  if (in < k) {
    throw ShapeError(std::string("window larger than input along ") + axis + " (" + std::to_string(in) + " < " +
                     std::to_string(k) + ")");
  }
  return (in - k) / s + 1;
}

/// Row (n,i,j), column (di,dj,c) <- input[n, i*sh+di, j*sw+dj, c].
template <class T>
void im2col(const T* in, const Patches& p, T* col) {
  const std::size_t span = p.kw * p.channels;
  for (std::size_t n = 0; n < p.batch; ++n) {
    for (std::size_t i = 0; i < p.out_h; ++i) {
      for (std::size_t j = 0; j < p.out_w; ++j) {
        T* dst = col + ((n * p.out_h + i) * p.out_w + j) * p.cols();
        for (std::size_t di = 0; di < p.kh; ++di) {
          const T* src = in + ((n * p.in_h + i * p.sh + di) * p.in_w + j * p.sw) * p.channels;
          std::copy_n(src, span, dst + di * span);
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds columns back into an N,H,W,C tensor.
template <class T>
void col2im(const T* col, const Patches& p, T* out) {
  const std::size_t span = p.kw * p.channels;
  for (std::size_t n = 0; n < p.batch; ++n) {
    for (std::size_t i = 0; i < p.out_h; ++i) {
      for (std::size_t j = 0; j < p.out_w; ++j) {
        const T* src = col + ((n * p.out_h + i) * p.out_w + j) * p.cols();
        for (std::size_t di = 0; di < p.kh; ++di) {
          T* dst = out + ((n * p.in_h + i * p.sh + di) * p.in_w + j * p.sw) * p.channels;
          for (std::size_t q = 0; q < span; ++q) dst[q] += src[di * span + q];
        }
      }
    }
  }
}

template <class T>
void uniform_fill(Tensor<T>& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

template <class T>
void add_bias_rows(Tensor<T>& out, const Tensor<T>& bias) {
  const std::size_t c = bias.size();
  T* o = out.data();
  for (std::size_t r = 0; r < out.size() / c; ++r)
    for (std::size_t k = 0; k < c; ++k) o[r * c + k] += bias[k];
}

template <class T>
void accumulate_bias_grad(const Tensor<T>& grad_out, Tensor<T>& bias_grad) {
  const std::size_t c = bias_grad.size();
  const T* g = grad_out.data();
  for (std::size_t r = 0; r < grad_out.size() / c; ++r)
    for (std::size_t k = 0; k < c; ++k) bias_grad[k] += g[r * c + k];
}

}  // namespace detail

/// 2-D convolution with valid padding over N,H,W,C inputs.
template <class T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t filters, Window filter, Window stride, std::mt19937_64& rng)
      : in_channels_(in_channels), filters_(filters), filter_(filter), stride_(stride) {
    if (filter.time == 0 || filter.freq == 0 || stride.time == 0 || stride.freq == 0) {
      throw std::invalid_argument("Conv2d: filter and stride must be >= 1");
    }
    const std::size_t fan_in = filter.time * filter.freq * in_channels;
    weight_ = Parameter<T>("weight", Tensor<T>({fan_in, filters}));
    bias_ = Parameter<T>("bias", Tensor<T>({filters}));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    detail::uniform_fill(weight_.value, bound, rng);
    detail::uniform_fill(bias_.value, bound, rng);
  }

  Tensor<T> forward(const Tensor<T>& input, Mode) override {
    if (input.rank() != 4 || input.dim(3) != in_channels_) {
      throw ShapeError("Conv2d '" + this->name() + "': expected [N,H,W," + std::to_string(in_channels_) + "], got " +
                       nn::to_string(input.shape()));
    }
    geom_ = {input.dim(0), input.dim(1), input.dim(2), in_channels_, filter_.time, filter_.freq, stride_.time,
             stride_.freq, detail::valid_out(input.dim(1), filter_.time, stride_.time, "time"),
             detail::valid_out(input.dim(2), filter_.freq, stride_.freq, "frequency")};
    input_shape_ = input.shape();
    cols_.assign(geom_.rows() * geom_.cols(), T{0});
    detail::im2col(input.data(), geom_, cols_.data());
    Tensor<T> out({geom_.batch, geom_.out_h, geom_.out_w, filters_});
    MatrixMap<T>(out.data(), geom_.rows(), filters_).noalias() =
        ConstMatrixMap<T>(cols_.data(), geom_.rows(), geom_.cols()) *
        ConstMatrixMap<T>(weight_.value.data(), geom_.cols(), filters_);
    detail::add_bias_rows(out, bias_.value);
    cached_ = true;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    this->require_cache(cached_);
    require_shape(grad_output.shape(), {geom_.batch, geom_.out_h, geom_.out_w, filters_}, "Conv2d::backward");
    ConstMatrixMap<T> g(grad_output.data(), geom_.rows(), filters_);
    ConstMatrixMap<T> cols(cols_.data(), geom_.rows(), geom_.cols());
    MatrixMap<T>(weight_.grad.data(), geom_.cols(), filters_).noalias() += cols.transpose() * g;
    detail::accumulate_bias_grad(grad_output, bias_.grad);
    cached_ = false;
    if (!this->propagate_input_grad_) return {};
    typename Tensor<T>::Storage dcols(geom_.rows() * geom_.cols());
    MatrixMap<T>(dcols.data(), geom_.rows(), geom_.cols()).noalias() =
        g * ConstMatrixMap<T>(weight_.value.data(), geom_.cols(), filters_).transpose();
    Tensor<T> grad_input(input_shape_);
    detail::col2im(dcols.data(), geom_, grad_input.data());
    return grad_input;
  }

  LayerSpec spec() const override { return {LayerKind::conv, in_channels_, filters_, filter_, stride_, {}}; }
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

 private:
  std::size_t in_channels_, filters_;
  Window filter_, stride_;
  Parameter<T> weight_, bias_;
  detail::Patches geom_{};
  Shape input_shape_;
  typename Tensor<T>::Storage cols_;
  bool cached_ = false;
};

/// Transposed 2-D convolution: the adjoint of Conv2d's sliding window, giving
/// out = (in - 1) * stride + filter along each axis.
template <class T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(std::size_t in_channels, std::size_t filters, Window filter, Window stride, std::mt19937_64& rng)
      : in_channels_(in_channels), filters_(filters), filter_(filter), stride_(stride) {
    if (filter.time == 0 || filter.freq == 0 || stride.time == 0 || stride.freq == 0) {
      throw std::invalid_argument("ConvTranspose2d: filter and stride must be >= 1");
    }
    const std::size_t taps = filter.time * filter.freq * filters;
    weight_ = Parameter<T>("weight", Tensor<T>({in_channels, taps}));
    bias_ = Parameter<T>("bias", Tensor<T>({filters}));
    // Each output receives in_channels * (filter / stride) contributions.
    const std::size_t fan_in = in_channels * filter.time * filter.freq;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    detail::uniform_fill(weight_.value, bound, rng);
    detail::uniform_fill(bias_.value, bound, rng);
  }

  Tensor<T> forward(const Tensor<T>& input, Mode) override {
    if (input.rank() != 4 || input.dim(3) != in_channels_) {
      throw ShapeError("ConvTranspose2d '" + this->name() + "': expected [N,H,W," + std::to_string(in_channels_) +
                       "], got " + nn::to_string(input.shape()));
    }
    const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2);
    geom_ = {n, (h - 1) * stride_.time + filter_.time, (w - 1) * stride_.freq + filter_.freq, filters_,
             filter_.time, filter_.freq, stride_.time, stride_.freq, h, w};
    input_ = input;
    typename Tensor<T>::Storage cols(geom_.rows() * geom_.cols());
    MatrixMap<T>(cols.data(), geom_.rows(), geom_.cols()).noalias() =
        ConstMatrixMap<T>(input.data(), geom_.rows(), in_channels_) *
        ConstMatrixMap<T>(weight_.value.data(), in_channels_, geom_.cols());
    Tensor<T> out({n, geom_.in_h, geom_.in_w, filters_});
    detail::col2im(cols.data(), geom_, out.data());
    detail::add_bias_rows(out, bias_.value);
    cached_ = true;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    this->require_cache(cached_);
    require_shape(grad_output.shape(), {geom_.batch, geom_.in_h, geom_.in_w, filters_}, "ConvTranspose2d::backward");
    typename Tensor<T>::Storage dcols(geom_.rows() * geom_.cols());
    detail::im2col(grad_output.data(), geom_, dcols.data());
    ConstMatrixMap<T> dc(dcols.data(), geom_.rows(), geom_.cols());
    ConstMatrixMap<T> in(input_.data(), geom_.rows(), in_channels_);
    MatrixMap<T>(weight_.grad.data(), in_channels_, geom_.cols()).noalias() += in.transpose() * dc;
    detail::accumulate_bias_grad(grad_output, bias_.grad);
    cached_ = false;
    if (!this->propagate_input_grad_) return {};
    Tensor<T> grad_input(input_.shape());
    MatrixMap<T>(grad_input.data(), geom_.rows(), in_channels_).noalias() =
        dc * ConstMatrixMap<T>(weight_.value.data(), in_channels_, geom_.cols()).transpose();
    return grad_input;
  }

  LayerSpec spec() const override { return {LayerKind::transposed_conv, in_channels_, filters_, filter_, stride_, {}}; }
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

 private:
  std::size_t in_channels_, filters_;
  Window filter_, stride_;
  Parameter<T> weight_, bias_;
  // Geometry of the window over the *output*; in_h/in_w hold the output extent.
  detail::Patches geom_{};
  Tensor<T> input_;
  bool cached_ = false;
};

/// Affine map over the flattened per-example features.
template <class T>
class FullyConnected : public Layer<T> {
 public:
  FullyConnected(std::size_t in_features, std::size_t units, std::mt19937_64& rng)
      : in_(in_features), units_(units) {
    weight_ = Parameter<T>("weight", Tensor<T>({in_features, units}));
    bias_ = Parameter<T>("bias", Tensor<T>({units}));
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    detail::uniform_fill(weight_.value, bound, rng);
    detail::uniform_fill(bias_.value, bound, rng);
  }

  Tensor<T> forward(const Tensor<T>& input, Mode) override {
    if (input.rank() < 2 || input.row_size() != in_) {
      throw ShapeError("FullyConnected '" + this->name() + "': expected " + std::to_string(in_) +
                       " features per example, got shape " + nn::to_string(input.shape()));
    }
    input_ = input;
    const std::size_t n = input.dim(0);
    Tensor<T> out({n, units_});
    MatrixMap<T>(out.data(), n, units_).noalias() =
        ConstMatrixMap<T>(input.data(), n, in_) * ConstMatrixMap<T>(weight_.value.data(), in_, units_);
    detail::add_bias_rows(out, bias_.value);
    cached_ = true;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    this->require_cache(cached_);
    const std::size_t n = input_.dim(0);
    require_shape(grad_output.shape(), {n, units_}, "FullyConnected::backward");
    ConstMatrixMap<T> g(grad_output.data(), n, units_);
    MatrixMap<T>(weight_.grad.data(), in_, units_).noalias() +=
        ConstMatrixMap<T>(input_.data(), n, in_).transpose() * g;
    detail::accumulate_bias_grad(grad_output, bias_.grad);
    cached_ = false;
    if (!this->propagate_input_grad_) return {};
    Tensor<T> grad_input(input_.shape());
    MatrixMap<T>(grad_input.data(), n, in_).noalias() =
        g * ConstMatrixMap<T>(weight_.value.data(), in_, units_).transpose();
    return grad_input;
  }

  LayerSpec spec() const override { return {LayerKind::fully_connected, in_, units_, {}, {}, {}}; }
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

 protected:
  std::size_t in_, units_;

 private:
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
  bool cached_ = false;
};

/// Gaussian posterior head: a linear map to [mu | log_var], each `latent` wide.
template <class T>
class GaussianLatent final : public FullyConnected<T> {
 public:
  GaussianLatent(std::size_t in_features, std::size_t latent, std::mt19937_64& rng)
      : FullyConnected<T>(in_features, 2 * latent, rng) {}

  std::size_t latent() const { return this->units_ / 2; }
  LayerSpec spec() const override { return {LayerKind::gaussian_latent, this->in_, this->units_, {}, {}, {}}; }
};

/// Batch normalization over the last axis. Train mode normalizes with the
/// biased batch variance and folds the unbiased variance into the running
/// estimate; eval mode uses the running estimates only.
template <class T>
class BatchNorm final : public Layer<T> {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.9, double eps = 1e-5)
      : channels_(channels), momentum_(momentum), eps_(eps) {
    gamma_ = Parameter<T>("gamma", Tensor<T>({channels}, T{1}));
    beta_ = Parameter<T>("beta", Tensor<T>({channels}, T{0}));
    running_mean_ = Tensor<T>({channels}, T{0});
    running_var_ = Tensor<T>({channels}, T{1});
  }

  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    if (input.rank() < 2 || input.shape().back() != channels_) {
      throw ShapeError("BatchNorm '" + this->name() + "': expected last axis " + std::to_string(channels_) +
                       ", got " + nn::to_string(input.shape()));
    }
    const std::size_t rows = input.size() / channels_;
    mode_ = frozen_ ? Mode::eval : mode;
    mode = mode_;
    inv_std_.assign(channels_, 0.0);
    std::vector<double> mean(channels_, 0.0);
    if (mode == Mode::train) {
      if (rows < 1) throw ShapeError("BatchNorm: empty batch");
      std::vector<double> sq(channels_, 0.0);
      const T* x = input.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < channels_; ++c) mean[c] += x[r * channels_ + c];
      for (auto& m : mean) m /= static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < channels_; ++c) {
          const double d = x[r * channels_ + c] - mean[c];
          sq[c] += d * d;
        }
      for (std::size_t c = 0; c < channels_; ++c) {
        const double var = sq[c] / static_cast<double>(rows);
        const double unbiased = rows > 1 ? sq[c] / static_cast<double>(rows - 1) : var;
        inv_std_[c] = 1.0 / std::sqrt(var + eps_);
        running_mean_[c] = static_cast<T>(momentum_ * running_mean_[c] + (1.0 - momentum_) * mean[c]);
        running_var_[c] = static_cast<T>(momentum_ * running_var_[c] + (1.0 - momentum_) * unbiased);
      }
    } else {
      for (std::size_t c = 0; c < channels_; ++c) {
        mean[c] = running_mean_[c];
        inv_std_[c] = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
      }
    }
    normalized_ = Tensor<T>(input.shape());
    Tensor<T> out(input.shape());
    const T* x = input.data();
    T* xh = normalized_.data();
    T* o = out.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < channels_; ++c) {
        const std::size_t i = r * channels_ + c;
        xh[i] = static_cast<T>((x[i] - mean[c]) * inv_std_[c]);
        o[i] = gamma_.value[c] * xh[i] + beta_.value[c];
      }
    cached_ = true;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    this->require_cache(cached_);
    require_shape(grad_output.shape(), normalized_.shape(), "BatchNorm::backward");
    const std::size_t rows = grad_output.size() / channels_;
    const T* g = grad_output.data();
    const T* xh = normalized_.data();
    std::vector<double> sum_g(channels_, 0.0), sum_gx(channels_, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < channels_; ++c) {
        const std::size_t i = r * channels_ + c;
        sum_g[c] += g[i];
        sum_gx[c] += static_cast<double>(g[i]) * xh[i];
      }
    for (std::size_t c = 0; c < channels_; ++c) {
      gamma_.grad[c] += static_cast<T>(sum_gx[c]);
      beta_.grad[c] += static_cast<T>(sum_g[c]);
    }
    cached_ = false;
    if (!this->propagate_input_grad_) return {};
    Tensor<T> grad_input(grad_output.shape());
    T* gi = grad_input.data();
    const double inv_rows = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < channels_; ++c) {
        const std::size_t i = r * channels_ + c;
        const double scale = gamma_.value[c] * inv_std_[c];
        if (mode_ == Mode::train) {
          gi[i] = static_cast<T>(scale * (g[i] - sum_g[c] * inv_rows - xh[i] * sum_gx[c] * inv_rows));
        } else {
          gi[i] = static_cast<T>(scale * g[i]);
        }
      }
    return grad_input;
  }

  LayerSpec spec() const override { return {LayerKind::batch_norm, channels_, channels_, {}, {}, {}}; }

  /// A frozen layer normalizes with (and never updates) its running statistics
  /// in either mode.
  void set_frozen(bool frozen) { frozen_ = frozen; }
  std::vector<Parameter<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Buffer<T>> buffers() override {
    return {{this->name() + ".running_mean", &running_mean_}, {this->name() + ".running_var", &running_var_}};
  }

 private:
  std::size_t channels_;
  double momentum_, eps_;
  Parameter<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> normalized_;
  std::vector<double> inv_std_;
  Mode mode_ = Mode::train;
  bool frozen_ = false;
  bool cached_ = false;
};

template <class T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& input, Mode) override {
    Tensor<T> out = input;
    for (auto& v : out.values()) v = v > T{0} ? v : T{0};
    output_ = out;
    cached_ = true;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    this->require_cache(cached_);
    require_shape(grad_output.shape(), output_.shape(), "ReLU::backward");
    Tensor<T> grad = grad_output;
    for (std::size_t i = 0; i < grad.size(); ++i)
      if (!(output_[i] > T{0})) grad[i] = T{0};
    cached_ = false;
    return grad;
  }

  LayerSpec spec() const override { return {LayerKind::relu, 0, 0, {}, {}, {}}; }

 private:
  Tensor<T> output_;
  bool cached_ = false;
};

template <class T>
T softplus(T x) {
  return x > T{0} ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <class T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

/// log(1 + e^x); strictly positive output.
template <class T>
class Softplus final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& input, Mode) override {
    input_ = input;
    Tensor<T> out = input;
    for (auto& v : out.values()) v = softplus(v);
    cached_ = true;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    this->require_cache(cached_);
    require_shape(grad_output.shape(), input_.shape(), "Softplus::backward");
    Tensor<T> grad = grad_output;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= sigmoid(input_[i]);
    cached_ = false;
    return grad;
  }

  LayerSpec spec() const override { return {LayerKind::softplus, 0, 0, {}, {}, {}}; }

 private:
  Tensor<T> input_;
  bool cached_ = false;
};

/// Reinterprets each example as `target` (the batch axis is kept).
template <class T>
class Reshape final : public Layer<T> {
 public:
  explicit Reshape(Shape target) : target_(std::move(target)) {}

  Tensor<T> forward(const Tensor<T>& input, Mode) override {
    if (input.rank() < 1 || input.row_size() != element_count(target_)) {
      throw ShapeError("Reshape '" + this->name() + "': cannot view " + nn::to_string(input.shape()) +
                       " as per-example " + nn::to_string(target_));
    }
    input_shape_ = input.shape();
    Shape shape{input.dim(0)};
    shape.insert(shape.end(), target_.begin(), target_.end());
    Tensor<T> out = input;
    out.reshape(shape);
    cached_ = true;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    this->require_cache(cached_);
    Tensor<T> grad = grad_output;
    grad.reshape(input_shape_);
    cached_ = false;
    return grad;
  }

  LayerSpec spec() const override { return {LayerKind::reshape, 0, 0, {}, {}, target_}; }

 private:
  Shape target_;
  Shape input_shape_;
  bool cached_ = false;
};

}  // namespace weaksep::nn
