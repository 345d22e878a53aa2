#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "weaksep/nn/adam.hpp"
#include "weaksep/nn/checkpoint.hpp"
#include "weaksep/sepmodel/class_autoencoder.hpp"
#include "weaksep/sepmodel/losses.hpp"

namespace weaksep::sepmodel {

/// One autoencoder per source class plus the shared loss weight.
template <class T>
class ModelBundle {
 public:
  ModelBundle(std::vector<int> labels, Variant variant, const Architecture& arch, double beta, std::uint64_t seed)
      : labels_(std::move(labels)), variant_(variant), arch_(arch), beta_(beta) {
    if (labels_.empty()) throw std::invalid_argument("ModelBundle: no class labels");
    if (!(beta_ >= 0.0)) throw std::invalid_argument("ModelBundle: beta must be >= 0");
    auto sorted = labels_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw std::invalid_argument("ModelBundle: duplicate class label");
    }
    for (std::size_t k = 0; k < labels_.size(); ++k) {
      classes_.emplace_back(labels_[k], variant, arch, seed + 0x9E3779B97F4A7C15ULL * (k + 1));
    }
  }

  std::size_t size() const { return classes_.size(); }
  const std::vector<int>& labels() const { return labels_; }
  Variant variant() const { return variant_; }
  const Architecture& architecture() const { return arch_; }
  double beta() const { return beta_; }
  void set_beta(double beta) {
    if (!(beta >= 0.0)) throw std::invalid_argument("ModelBundle: beta must be >= 0");
    beta_ = beta;
  }

  ClassAutoencoder<T>& at(std::size_t k) { return classes_.at(k); }

  std::size_t index_of(int label) const {
    const auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw DataError("model has no class " + std::to_string(label));
    return static_cast<std::size_t>(it - labels_.begin());
  }

  std::vector<nn::Parameter<T>*> parameters() {
    std::vector<nn::Parameter<T>*> out;
    for (auto& c : classes_)
      for (auto* p : c.parameters()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto& c : classes_) c.zero_grad();
  }

  /// Copies of every parameter and running statistic, in a fixed order.
  std::vector<Tensor<T>> state() {
    std::vector<Tensor<T>> out;
    for (auto& c : classes_) {
      for (auto* p : c.parameters()) out.push_back(p->value);
      for (auto b : c.buffers()) out.push_back(*b.tensor);
    }
    return out;
  }

  void load_state(const std::vector<Tensor<T>>& snapshot) {
    std::size_t i = 0;
    for (auto& c : classes_) {
      for (auto* p : c.parameters()) assign(p->value, snapshot, i++);
      for (auto b : c.buffers()) assign(*b.tensor, snapshot, i++);
    }
    if (i != snapshot.size()) throw ShapeError("ModelBundle::load_state: snapshot has extra tensors");
  }

  static std::string blob_name(int label, const std::string& name) {
    return "class" + std::to_string(label) + "/" + name;
  }

  /// Parameters, batch-norm statistics and, optionally, one Adam state per class.
  nn::Checkpoint to_checkpoint(const std::vector<nn::AdamState<T>>* adam = nullptr,
                               const nlohmann::json& extra = nlohmann::json::object()) {
    nn::Checkpoint ckpt;
    ckpt.header["format"] = "weaksep-model";
    ckpt.header["architecture"] = arch_;
    ckpt.header["class_labels"] = labels_;
    ckpt.header["variant"] = to_string(variant_);
    ckpt.header["beta"] = beta_;
    ckpt.header["metadata"] = extra;
    if (adam != nullptr) {
      if (adam->size() != classes_.size()) throw ShapeError("to_checkpoint: one Adam state per class expected");
      nlohmann::json steps = nlohmann::json::array();
      for (const auto& s : *adam) steps.push_back(s.step);
      ckpt.header["adam_steps"] = steps;
      const auto& h = adam->front().hyper;
      ckpt.header["adam"] = {{"lr", h.lr}, {"beta1", h.beta1}, {"beta2", h.beta2}, {"eps", h.eps}};
    }
    for (std::size_t k = 0; k < classes_.size(); ++k) {
      auto params = classes_[k].parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        nn::append_tensor(ckpt, nn::BlobSection::parameter, blob_name(labels_[k], params[i]->name), params[i]->value);
        if (adam != nullptr) {
          nn::append_tensor(ckpt, nn::BlobSection::adam_first_moment, blob_name(labels_[k], params[i]->name),
                            (*adam)[k].m.at(i));
          nn::append_tensor(ckpt, nn::BlobSection::adam_second_moment, blob_name(labels_[k], params[i]->name),
                            (*adam)[k].v.at(i));
        }
      }
      for (auto b : classes_[k].buffers()) {
        nn::append_tensor(ckpt, nn::BlobSection::buffer, blob_name(labels_[k], b.name), *b.tensor);
      }
    }
    return ckpt;
  }

  static ModelBundle from_checkpoint(const nn::Checkpoint& ckpt, std::vector<nn::AdamState<T>>* adam = nullptr) {
    const auto& h = ckpt.header;
    if (h.value("format", std::string()) != "weaksep-model") throw DataError("checkpoint is not a weaksep model");
    ModelBundle bundle(h.at("class_labels").get<std::vector<int>>(), parse_variant(h.at("variant").get<std::string>()),
                       h.at("architecture").get<Architecture>(), h.at("beta").get<double>(), 0);
    for (std::size_t k = 0; k < bundle.classes_.size(); ++k) {
      const int label = bundle.labels_[k];
      for (auto* p : bundle.classes_[k].parameters()) {
        p->value = read_blob(ckpt, nn::BlobSection::parameter, blob_name(label, p->name), p->value.shape());
      }
      for (auto b : bundle.classes_[k].buffers()) {
        *b.tensor = read_blob(ckpt, nn::BlobSection::buffer, blob_name(label, b.name), b.tensor->shape());
      }
    }
    if (adam != nullptr) {
      adam->clear();
      if (!h.contains("adam_steps")) throw DataError("checkpoint carries no optimizer state");
      nn::AdamHyper hyper;
      hyper.lr = h.at("adam").at("lr");
      hyper.beta1 = h.at("adam").at("beta1");
      hyper.beta2 = h.at("adam").at("beta2");
      hyper.eps = h.at("adam").at("eps");
      for (std::size_t k = 0; k < bundle.classes_.size(); ++k) {
        auto params = bundle.classes_[k].parameters();
        nn::AdamState<T> s(params, hyper);
        s.step = h.at("adam_steps").at(k).template get<std::uint64_t>();
        for (std::size_t i = 0; i < params.size(); ++i) {
          const auto name = blob_name(bundle.labels_[k], params[i]->name);
          s.m[i] = read_blob(ckpt, nn::BlobSection::adam_first_moment, name, params[i]->value.shape());
          s.v[i] = read_blob(ckpt, nn::BlobSection::adam_second_moment, name, params[i]->value.shape());
        }
        adam->push_back(std::move(s));
      }
    }
    return bundle;
  }

  void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object()) {
    nn::write_checkpoint(path, to_checkpoint(nullptr, extra));
  }

  static ModelBundle load(const std::filesystem::path& path) { return from_checkpoint(nn::read_checkpoint(path)); }

 private:
  static void assign(Tensor<T>& dst, const std::vector<Tensor<T>>& snapshot, std::size_t i) {
    if (i >= snapshot.size()) throw ShapeError("ModelBundle::load_state: snapshot too short");
    nn::require_shape(snapshot[i].shape(), dst.shape(), "ModelBundle::load_state");
    dst = snapshot[i];
  }

  static Tensor<T> read_blob(const nn::Checkpoint& ckpt, nn::BlobSection section, const std::string& name,
                             const nn::Shape& expected) {
    const auto* blob = ckpt.find(section, name);
    if (blob == nullptr) throw DataError("checkpoint is missing tensor " + name);
    auto t = nn::blob_tensor<T>(*blob);
    if (t.shape() != expected) {
      throw DataError("checkpoint tensor " + name + " has shape " + nn::to_string(t.shape()) + ", expected " +
                      nn::to_string(expected));
    }
    return t;
  }

  std::vector<int> labels_;
  Variant variant_;
  Architecture arch_;
  double beta_;
  std::vector<ClassAutoencoder<T>> classes_;
};

}  // namespace weaksep::sepmodel
