#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lfm/errors.hpp"
#include "lfm/nn/tensor.hpp"

namespace lfm::nn {

/// Constant learning rate when step_epochs == 0, otherwise multiplied by
/// gamma every step_epochs epochs.
struct LrSchedule {
  double base_lr = 0.05;
  std::size_t step_epochs = 0;
  double gamma = 0.1;

  double at(std::size_t epoch) const {
    if (step_epochs == 0) return base_lr;
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step_epochs));
  }
};

template <typename T>
struct OptState {
  LrSchedule schedule;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epoch = 0;
  std::vector<std::vector<T>> buffers;  // one per parameter; empty for frozen ones

  double lr() const { return schedule.at(epoch); }
};

/// SGD with momentum and L2 decay:  v <- mu v + g + lambda w;  w <- w - lr v.
/// Clears every gradient afterwards.
template <typename T>
void sgd_step(ParamSet<T>& params, OptState<T>& opt) {
  if (opt.buffers.size() != params.size()) opt.buffers.assign(params.size(), {});
  const T lr = static_cast<T>(opt.lr());
  const T mu = static_cast<T>(opt.momentum);
  const T decay = static_cast<T>(opt.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].tensor;
    if (!t.requires_grad) continue;
    if (!t.grad) throw StructuralError("parameter " + params[i].name + " has no gradient");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].tensor;
    if (!t.requires_grad) continue;
    auto& v = opt.buffers[i];
    if (v.size() != t.size()) v.assign(t.size(), T{0});
    const auto& g = *t.grad;
    for (std::size_t k = 0; k < t.size(); ++k) {
      v[k] = mu * v[k] + g[k] + decay * t.values[k];
      t.values[k] -= lr * v[k];
    }
  }
  params.zero_grad();
}

}  // namespace lfm::nn
