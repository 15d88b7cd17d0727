#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lfm/masking.hpp"
#include "lfm/nn/loss.hpp"
#include "lfm/nn/model.hpp"
#include "lfm/rng.hpp"

namespace lfm::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // probes whose +-step crossed a ReLU/maxpool switch
  std::string worst_param;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps round-off on vanishing
/// gradients from dominating the ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

template <typename T>
double train_loss(MiniResNet<T>& model, const FeatureBlock<T>& images, std::span<const int> labels,
                  const std::vector<MaskDecision>* replay) {
  const auto out = model.forward(images, Mode::train, nullptr, replay);
  return softmax_cross_entropy<T>(out.logits, model.config().num_classes, labels,
                                  model.config().label_smoothing)
      .loss;
}

/// Compares analytic parameter gradients with Richardson-extrapolated
/// central differences (steps h and h/2, error O(h^4)) on at
/// least `min_params` sampled trainable elements (every tensor is sampled at
/// least once). Masking must be frozen through `replay` (or disabled) so the
/// loss is a deterministic function of the parameters.
///
/// A probe whose perturbed passes take a different ReLU/maxpool branch than
/// the unperturbed one straddles a kink, where the central difference is not
/// an estimate of the derivative; such probes are counted and replaced by a
/// fresh draw.
template <typename T>
GradCheckResult grad_check(MiniResNet<T>& model, const FeatureBlock<T>& images,
                           std::span<const int> labels, const std::vector<MaskDecision>* replay,
                           RngStream pick, std::size_t min_params = 200, double step = 1e-3) {
  if (model.config().dropout > 0.0 || model.config().spatial_dropout > 0.0)
    throw ConfigError("grad_check requires dropout disabled");
  auto& ps = model.params();
  ps.zero_grad();
  const auto out = model.forward(images, Mode::train, nullptr, replay);
  const auto loss = softmax_cross_entropy<T>(out.logits, model.config().num_classes, labels,
                                             model.config().label_smoothing);
  model.backward(loss.d_logits);

  const std::uint64_t pattern = model.activation_pattern();
  auto perturbed = [&](Tensor<T>& t, std::size_t k, double delta, bool& same_branch) {
    const T saved = t.values[k];
    t.values[k] = static_cast<T>(saved + delta);
    const double v = train_loss(model, images, labels, replay);
    same_branch = same_branch && model.activation_pattern() == pattern;
    t.values[k] = saved;
    return v;
  };

  GradCheckResult result;
  auto probe = [&](std::size_t pi, std::size_t k) {
    auto& t = ps[pi].tensor;
    const double analytic = t.grad ? static_cast<double>((*t.grad)[k]) : 0.0;
    bool smooth = true;
    const double wide = (perturbed(t, k, step, smooth) - perturbed(t, k, -step, smooth)) / (2.0 * step);
    const double narrow =
        (perturbed(t, k, step / 2, smooth) - perturbed(t, k, -step / 2, smooth)) / step;
    if (!smooth) {
      ++result.skipped_kinks;
      return false;
    }
    const double err = relative_error(analytic, (4.0 * narrow - wide) / 3.0);
    ++result.checked;
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_param = ps[pi].name + "[" + std::to_string(k) + "]";
    }
    return true;
  };

  std::vector<std::size_t> trainable;
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps[i].tensor.requires_grad) trainable.push_back(i);
  const std::size_t budget = 50 * (min_params + trainable.size());
  std::size_t tries = 0;
  for (auto i : trainable)
    while (!probe(i, pick.uniform_int(ps[i].tensor.size())))
      if (++tries > budget) throw NumericError("grad_check: no smooth probe for " + ps[i].name);
  while (result.checked < min_params) {
    const auto i = trainable[pick.uniform_int(trainable.size())];
    probe(i, pick.uniform_int(ps[i].tensor.size()));
    if (++tries > budget) throw NumericError("grad_check: too many probes straddle kinks");
  }
  return result;
}

}  // namespace lfm::nn
