#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "frec/error.hpp"
#include "frec/tensor.hpp"

namespace frec {

struct Parameter {
  std::string name;
  Tensor value;
  /// Row 0 stays zero and never updates (PAD row of an embedding table).
  bool pad_row_frozen = false;
};

/// Named learnable tensors in a fixed registration order. The order is part
/// of the checkpoint layout and of optimizer state alignment.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor value, bool pad_row_frozen = false) {
    if (find(name) != nullptr) throw ShapeError("duplicate parameter " + name);
    value.set_requires_grad(true);
    params_.push_back({std::move(name), std::move(value), pad_row_frozen});
    if (params_.back().pad_row_frozen) zero_pad_row(params_.back());
    return params_.back().value;
  }

  const Parameter* find(const std::string& name) const {
    auto it = std::find_if(params_.begin(), params_.end(),
                           [&](const Parameter& p) { return p.name == name; });
    return it == params_.end() ? nullptr : &*it;
  }

  Tensor& at(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p.value;
    throw ShapeError("no parameter named " + name);
  }
  const Tensor& at(const std::string& name) const {
    const Parameter* p = find(name);
    if (p == nullptr) throw ShapeError("no parameter named " + name);
    return p->value;
  }

  std::vector<Parameter>& items() { return params_; }
  const std::vector<Parameter>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& p : params_) out.push_back(p.value);
    return out;
  }

  void zero_grads() {
    for (auto& p : params_) p.value.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Deep copy with fresh leaves and no gradients.
  ParameterSet clone() const {
    ParameterSet out;
    for (const auto& p : params_) out.add(p.name, p.value.detach(), p.pad_row_frozen);
    return out;
  }

  static void zero_pad_row(Parameter& p) {
    const std::size_t width = p.value.cols();
    auto v = p.value.data();
    std::fill(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(width), 0.0);
  }

 private:
  std::vector<Parameter> params_;
};

}  // namespace frec
