#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "weaksep/nn/layers.hpp"

namespace weaksep::nn {

template <class T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <class L>
  L& add(std::string name, std::unique_ptr<L> layer) {
    L& ref = *layer;
    layer->set_name(std::move(name));
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(Tensor<T> x, Mode mode) {
    for (auto& layer : layers_) x = layer->forward(x, mode);
    return x;
  }

  Tensor<T> backward(Tensor<T> grad) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      grad = (*it)->backward(grad);
      if (grad.empty() && std::next(it) != layers_.rend()) {
        throw std::logic_error("Sequential: input gradient suppressed before the first layer");
      }
    }
    return grad;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& layer : layers_)
      for (auto* p : layer->parameters()) out.push_back(p);
    return out;
  }

  std::vector<Buffer<T>> buffers() {
    std::vector<Buffer<T>> out;
    for (auto& layer : layers_)
      for (auto b : layer->buffers()) out.push_back(b);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    for (const auto& layer : layers_) out.push_back(layer->spec());
    return out;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace weaksep::nn
