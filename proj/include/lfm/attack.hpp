#pragma once

// Black-box robustness probe: adversarial queries are crafted with a
// surrogate model's gradients and then fed to a target model whose
// gradients are never used.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lfm/data/batches.hpp"
#include "lfm/data/dataset.hpp"
#include "lfm/errors.hpp"
#include "lfm/feature_block.hpp"
#include "lfm/metrics.hpp"
#include "lfm/nn/inference.hpp"
#include "lfm/nn/model.hpp"
#include "lfm/rng.hpp"

namespace lfm::attack {

inline constexpr const char* kTransferPgdLabel = "transfer-PGD (DMR substitute)";
inline constexpr const char* kGaussianLabel = "gaussian-noise";

struct AttackConfig {
  double epsilon = 8.0 / 255.0;   // L-inf budget in [0, 1] pixel units
  double step_size = 2.0 / 255.0;
  int steps = 10;
  bool random_start = true;
  double noise_sigma = 0.0;       // Gaussian baseline
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("attack epsilon must lie in [0, 1]");
    if (!(step_size >= 0.0 && step_size <= epsilon))
      throw ConfigError("attack step_size must lie in [0, epsilon]");
    if (steps < 1) throw ConfigError("attack steps must be >= 1");
    if (!(noise_sigma >= 0.0)) throw ConfigError("attack noise_sigma must be >= 0");
  }
};

template <typename T>
struct DivergenceResult {
  double loss = 0.0;               // sum over samples
  std::vector<double> per_sample;  // squared L2 embedding displacement
  FeatureBlock<T> grad;            // d(loss)/d(x)
};

/// Squared L2 distance between eval-mode embeddings of `x` and
/// `reference` (row-major B x D), with its gradient w.r.t. the pixels.
template <typename T>
DivergenceResult<T> embedding_divergence_loss(nn::MiniResNet<T>& model, const FeatureBlock<T>& x,
                                              std::span<const T> reference) {
  const std::size_t dim = model.config().embedding_dim();
  if (reference.size() != x.batch() * dim) throw StructuralError("reference embedding size mismatch");
  const auto out = model.forward(x, nn::Mode::eval);
  DivergenceResult<T> r;
  r.per_sample.assign(x.batch(), 0.0);
  std::vector<T> d_emb(out.embedding.size());
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t k = 0; k < dim; ++k) {
      const std::size_t i = b * dim + k;
      const double diff = static_cast<double>(out.embedding[i]) - reference[i];
      r.per_sample[b] += diff * diff;
      d_emb[i] = static_cast<T>(2.0 * diff);
    }
  for (double v : r.per_sample) r.loss += v;
  r.grad = *model.backward({}, d_emb, true);
  model.params().zero_grad();
  if (!r.grad.all_finite()) throw NumericError("non-finite input gradient in embedding divergence");
  return r;
}

/// L-inf PGD maximizing embedding divergence from the clean embedding:
/// optional uniform start in the eps-ball, then K steps of
/// x <- clip(x + alpha * sign(grad), x_clean +- eps) clipped to [0, 1].
/// Sample b draws its start from RngStream(cfg.seed, "pgd-start").fork(first_id + b).
template <typename T>
FeatureBlock<T> pgd_attack(nn::MiniResNet<T>& surrogate, const FeatureBlock<T>& x_clean,
                           const AttackConfig& cfg, std::size_t first_id = 0) {
  cfg.validate();
  const auto reference = surrogate.forward(x_clean, nn::Mode::eval).embedding;
  const T eps = static_cast<T>(cfg.epsilon);
  const T alpha = static_cast<T>(cfg.step_size);
  const auto& clean = x_clean.values();
  auto project = [&](FeatureBlock<T>& x) {
    auto& v = x.values();
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = std::clamp(std::clamp(v[i], clean[i] - eps, clean[i] + eps), T{0}, T{1});
  };
  FeatureBlock<T> x = x_clean;
  if (cfg.random_start) {
    const RngStream base(cfg.seed, "pgd-start");
    for (std::size_t b = 0; b < x.batch(); ++b) {
      auto rng = base.fork(first_id + b);
      for (T& v : x.sample(b)) v += static_cast<T>(rng.uniform_real(-cfg.epsilon, cfg.epsilon));
    }
    project(x);
  }
  for (int step = 0; step < cfg.steps; ++step) {
    const auto r = embedding_divergence_loss<T>(surrogate, x, reference);
    auto& v = x.values();
    const auto& g = r.grad.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const T s = g[i] > T{0} ? T{1} : (g[i] < T{0} ? T{-1} : T{0});
      v[i] += alpha * s;
    }
    project(x);
  }
  return x;
}

/// x + N(0, sigma^2) per pixel, clipped to [0, 1]. Sample b uses rng.fork(b).
template <typename T>
FeatureBlock<T> gaussian_attack(const FeatureBlock<T>& x_clean, double sigma, const RngStream& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  FeatureBlock<T> x = x_clean;
  if (sigma == 0.0) return x;
  for (std::size_t b = 0; b < x.batch(); ++b) {
    auto s = rng.fork(b);
    for (T& v : x.sample(b)) v = std::clamp(static_cast<T>(v + sigma * s.normal()), T{0}, T{1});
  }
  return x;
}

enum class AttackKind { transfer_pgd, gaussian };

struct MetricDeltas {
  double rank1 = 0.0, rank5 = 0.0, rank10 = 0.0, map = 0.0;
};

struct AttackReport {
  metrics::EvalReport clean;
  metrics::EvalReport attacked;
  MetricDeltas deltas;  // clean - attacked
  std::string attack;
  AttackConfig config;
};

inline MetricDeltas metric_deltas(const metrics::EvalReport& clean, const metrics::EvalReport& attacked) {
  return {clean.rank1 - attacked.rank1, clean.rank5 - attacked.rank5, clean.rank10 - attacked.rank10,
          clean.map - attacked.map};
}

struct RetrievalSet {
  FeatureBlock<float> images;
  metrics::Labels labels;
};

inline RetrievalSet retrieval_set(const data::Dataset& ds, std::span<const std::size_t> indices) {
  RetrievalSet s{data::load_images<float>(ds, indices), {}};
  for (auto i : indices) {
    s.labels.ids.push_back(static_cast<int>(ds.samples[i].identity));
    s.labels.cams.push_back(static_cast<int>(ds.samples[i].camera));
  }
  return s;
}

/// Clean vs. attacked retrieval on `target`. Only `surrogate` is ever
/// differentiated; queries are perturbed, the gallery stays clean.
inline AttackReport transfer_evaluate(nn::MiniResNet<float>& target, nn::MiniResNet<float>& surrogate,
                                      const RetrievalSet& queries, const RetrievalSet& gallery,
                                      const AttackConfig& cfg, AttackKind kind = AttackKind::transfer_pgd,
                                      metrics::DistanceKind distance = metrics::DistanceKind::euclidean,
                                      const metrics::EvalOptions& opts = {}) {
  cfg.validate();
  if (&target == &surrogate || target.params().values_equal(surrogate.params()))
    throw ConfigError("target and surrogate are the same model; a transfer attack needs two");
  const std::size_t dim = target.config().embedding_dim();
  const auto gallery_emb = nn::extract_embeddings(target, gallery.images);
  const auto clean_emb = nn::extract_embeddings(target, queries.images);

  FeatureBlock<float> adversarial;
  if (kind == AttackKind::transfer_pgd) {
    adversarial = pgd_attack(surrogate, queries.images, cfg);
  } else {
    adversarial = gaussian_attack(queries.images, cfg.noise_sigma, RngStream(cfg.seed, "gaussian"));
  }
  const auto adv_emb = nn::extract_embeddings(target, adversarial);

  AttackReport rep;
  rep.attack = kind == AttackKind::transfer_pgd ? kTransferPgdLabel : kGaussianLabel;
  rep.config = cfg;
  rep.clean = metrics::evaluate(
      metrics::pairwise_distances<float>(clean_emb, gallery_emb, dim, distance), queries.labels,
      gallery.labels, opts, distance);
  rep.attacked = metrics::evaluate(
      metrics::pairwise_distances<float>(adv_emb, gallery_emb, dim, distance), queries.labels,
      gallery.labels, opts, distance);
  rep.deltas = metric_deltas(rep.clean, rep.attacked);
  return rep;
}

inline constexpr const char* kAttackCsvHeader = "model,attack,epsilon,steps,phase,rank1,rank5,rank10,map";

/// Clean row, attacked row, then a `delta` row (clean - attacked).
inline std::string attack_csv(const std::string& model, const AttackReport& r) {
  using metrics::fixed4;
  const std::string prefix = model + "," + r.attack + "," + fixed4(r.config.epsilon) + "," +
                             std::to_string(r.config.steps) + ",";
  auto row = [&](const char* phase, double r1, double r5, double r10, double map) {
    return prefix + phase + "," + fixed4(r1) + "," + fixed4(r5) + "," + fixed4(r10) + "," + fixed4(map) + "\n";
  };
  return std::string(kAttackCsvHeader) + "\n" +
         row("clean", r.clean.rank1, r.clean.rank5, r.clean.rank10, r.clean.map) +
         row("attacked", r.attacked.rank1, r.attacked.rank5, r.attacked.rank10, r.attacked.map) +
         row("delta", r.deltas.rank1, r.deltas.rank5, r.deltas.rank10, r.deltas.map);
}

}  // namespace lfm::attack
