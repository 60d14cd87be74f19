#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include "mminr/errors.hpp"

namespace mminr {

template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  std::size_t size() const { return value.size(); }
};

/// Flat, ordered registry of named parameters with matching gradient buffers.
template <typename T>
class ParamStore {
 public:
  using Id = std::size_t;

  Id add(std::string name, std::vector<int> shape) {
    for (const auto& p : params_) {
      if (p.name == name) throw ConfigError("duplicate parameter name " + name);
    }
    const auto count = static_cast<std::size_t>(
        std::accumulate(shape.begin(), shape.end(), 1LL, std::multiplies<long long>()));
    params_.push_back({std::move(name), std::move(shape), std::vector<T>(count, T(0)),
                       std::vector<T>(count, T(0))});
    return params_.size() - 1;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](Id id) { return params_[id]; }
  const Parameter<T>& operator[](Id id) const { return params_[id]; }

  std::span<const T> value(Id id) const { return params_[id].value; }
  std::span<T> value(Id id) { return params_[id].value; }
  std::span<T> grad(Id id) { return params_[id].grad; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Parameter<T>* find(const std::string& name) const {
    auto it = std::find_if(params_.begin(), params_.end(),
                           [&](const Parameter<T>& p) { return p.name == name; });
    return it == params_.end() ? nullptr : &*it;
  }
  Parameter<T>* find(const std::string& name) {
    return const_cast<Parameter<T>*>(std::as_const(*this).find(name));
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }

  /// Copies of every value array, in registration order.
  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value);
    return out;
  }

  void restore(const std::vector<std::vector<T>>& values) {
    if (values.size() != params_.size()) throw ConfigError("parameter snapshot size mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (values[i].size() != params_[i].value.size()) {
        throw ConfigError("parameter snapshot shape mismatch for " + params_[i].name);
      }
      params_[i].value = values[i];
    }
  }

 private:
  std::vector<Parameter<T>> params_;
};

}  // namespace mminr
