#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lfm/errors.hpp"

namespace lfm::nn {

template <typename T>
struct LossResult {
  double loss = 0.0;
  std::vector<T> d_logits;  // d(mean loss)/d(logits)
};

/// Mean softmax cross-entropy against label-smoothed targets
/// q = (1 - eps) * onehot(y) + eps / K.
template <typename T>
LossResult<T> softmax_cross_entropy(std::span<const T> logits, std::size_t classes,
                                    std::span<const int> labels, double eps) {
  const std::size_t batch = labels.size();
  if (classes == 0 || logits.size() != batch * classes)
    throw StructuralError("logits size does not match batch x classes");
  if (batch == 0) throw InputError("empty batch");
  LossResult<T> r;
  r.d_logits.resize(logits.size());
  const double uniform = eps / static_cast<double>(classes);
  std::vector<double> prob(classes);
  for (std::size_t i = 0; i < batch; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) +
                       ")");
    const T* row = logits.data() + i * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      prob[k] = std::exp(static_cast<double>(row[k]) - mx);
      z += prob[k];
    }
    const double log_z = std::log(z) + mx;
    for (std::size_t k = 0; k < classes; ++k) {
      const double target = uniform + (static_cast<std::size_t>(y) == k ? 1.0 - eps : 0.0);
      if (target > 0.0) r.loss -= target * (static_cast<double>(row[k]) - log_z);
      r.d_logits[i * classes + k] =
          static_cast<T>((prob[k] / z - target) / static_cast<double>(batch));
    }
  }
  r.loss /= static_cast<double>(batch);
  return r;
}

/// Index of the largest logit per row.
template <typename T>
std::vector<int> argmax_rows(std::span<const T> logits, std::size_t classes) {
  std::vector<int> out(logits.size() / classes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T* row = logits.data() + i * classes;
    out[i] = static_cast<int>(std::max_element(row, row + classes) - row);
  }
  return out;
}

}  // namespace lfm::nn
