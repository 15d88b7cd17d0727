#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lfm/errors.hpp"

namespace lfm::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

/// n-D array with an optional same-shape gradient.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> values;
  std::optional<std::vector<T>> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, bool trainable = false)
      : shape(std::move(s)), values(element_count(shape), T{0}), requires_grad(trainable) {}

  std::size_t size() const noexcept { return values.size(); }

  std::vector<T>& grad_buffer() {
    if (!grad) grad.emplace(values.size(), T{0});
    return *grad;
  }
};

/// Named parameters in registration order. Names are stable checkpoint keys.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  /// Registers a tensor and returns its index.
  std::size_t add(std::string name, Shape shape, bool trainable) {
    if (index_.count(name)) throw StructuralError("duplicate parameter name " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), Tensor<T>(std::move(shape), trainable)});
    return entries_.size() - 1;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<T>& at(const std::string& name) { return entries_[lookup(name)].tensor; }
  const Tensor<T>& at(const std::string& name) const { return entries_[lookup(name)].tensor; }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.grad.reset();
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.tensor.requires_grad) n += e.tensor.size();
    return n;
  }

  /// Element-wise equality of every value (names and shapes must match).
  bool values_equal(const ParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = other.entries_[i];
      if (a.name != b.name || a.tensor.shape != b.tensor.shape || a.tensor.values != b.tensor.values)
        return false;
    }
    return true;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw StructuralError("unknown parameter " + name);
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace lfm::nn
