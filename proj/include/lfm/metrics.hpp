#pragma once

// Retrieval evaluation: pairwise distances, CMC Rank-k and mAP.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lfm/errors.hpp"

namespace lfm::metrics {

enum class DistanceKind { euclidean, cosine };

inline const char* to_string(DistanceKind k) { return k == DistanceKind::euclidean ? "euclidean" : "cosine"; }

inline DistanceKind parse_distance(const std::string& s) {
  if (s == "euclidean") return DistanceKind::euclidean;
  if (s == "cosine") return DistanceKind::cosine;
  throw ConfigError("unknown distance kind '" + s + "'");
}

/// Row-major matrix of distances, rows = queries, cols = gallery.
struct DistanceMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t q, std::size_t g) const { return values[q * cols + g]; }
};

/// Euclidean: L2 distance. Cosine: 1 - cosine similarity (zero vectors rejected).
template <typename T>
DistanceMatrix pairwise_distances(std::span<const T> queries, std::span<const T> gallery,
                                  std::size_t dim, DistanceKind kind) {
  if (dim == 0 || queries.size() % dim != 0 || gallery.size() % dim != 0)
    throw StructuralError("embedding buffers are not a multiple of the dimension");
  DistanceMatrix d;
  d.rows = queries.size() / dim;
  d.cols = gallery.size() / dim;
  d.values.resize(d.rows * d.cols);
  auto norm = [dim](const T* v) {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) s += static_cast<double>(v[k]) * v[k];
    return std::sqrt(s);
  };
  std::vector<double> gnorm(d.cols);
  for (std::size_t g = 0; g < d.cols; ++g) {
    gnorm[g] = norm(gallery.data() + g * dim);
    if (kind == DistanceKind::cosine && gnorm[g] == 0.0)
      throw NumericError("zero-norm gallery embedding under cosine distance");
  }
  for (std::size_t q = 0; q < d.rows; ++q) {
    const T* qv = queries.data() + q * dim;
    const double qn = norm(qv);
    if (kind == DistanceKind::cosine && qn == 0.0)
      throw NumericError("zero-norm query embedding under cosine distance");
    for (std::size_t g = 0; g < d.cols; ++g) {
      const T* gv = gallery.data() + g * dim;
      double v = 0.0;
      if (kind == DistanceKind::euclidean) {
        for (std::size_t k = 0; k < dim; ++k) {
          const double diff = static_cast<double>(qv[k]) - gv[k];
          v += diff * diff;
        }
        v = std::sqrt(v);
      } else {
        for (std::size_t k = 0; k < dim; ++k) v += static_cast<double>(qv[k]) * gv[k];
        v = 1.0 - v / (qn * gnorm[g]);
      }
      d.values[q * d.cols + g] = v;
    }
  }
  return d;
}

/// Identity and camera of every query or gallery item.
struct Labels {
  std::vector<int> ids;
  std::vector<int> cams;
};

struct EvalOptions {
  std::vector<std::size_t> ks{1, 5, 10};
  bool exclude_same_camera = true;  // drop gallery items sharing id AND camera with the query
};

struct EvalReport {
  double rank1 = 0.0, rank5 = 0.0, rank10 = 0.0;
  double map = 0.0;
  std::vector<double> cmc;  // cmc[k-1] = Rank-k, for k = 1..max(ks)
  std::size_t n_queries = 0;  // queries that contributed
  std::size_t skipped = 0;    // queries without any valid match
  DistanceKind distance = DistanceKind::euclidean;

  double rank(std::size_t k) const { return k == 0 || cmc.empty() ? 0.0 : cmc[std::min(k, cmc.size()) - 1]; }
};

/// Per query: rank the gallery by ascending distance (ties by gallery
/// index), drop junk, then Rank-k = first correct hit at position <= k and
/// AP = (1/R) sum_i i / p_i over the hit positions p_1 < ... < p_R.
inline EvalReport evaluate(const DistanceMatrix& dist, const Labels& query, const Labels& gallery,
                           const EvalOptions& opts = {}, DistanceKind kind = DistanceKind::euclidean) {
  if (query.ids.size() != dist.rows || query.cams.size() != dist.rows ||
      gallery.ids.size() != dist.cols || gallery.cams.size() != dist.cols)
    throw StructuralError("label arrays do not match the distance matrix");
  const std::size_t max_k = opts.ks.empty() ? 10 : *std::max_element(opts.ks.begin(), opts.ks.end());
  EvalReport rep;
  rep.distance = kind;
  rep.cmc.assign(std::max<std::size_t>(max_k, 10), 0.0);
  double ap_sum = 0.0;
  std::vector<std::size_t> order(dist.cols);
  for (std::size_t q = 0; q < dist.rows; ++q) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist(q, a) < dist(q, b); });
    std::size_t pos = 0, hits = 0, first_hit = 0;
    double ap = 0.0;
    for (std::size_t g : order) {
      const bool same_id = gallery.ids[g] == query.ids[q];
      if (opts.exclude_same_camera && same_id && gallery.cams[g] == query.cams[q]) continue;
      ++pos;
      if (same_id) {
        ++hits;
        if (hits == 1) first_hit = pos;
        ap += static_cast<double>(hits) / static_cast<double>(pos);
      }
    }
    if (hits == 0) {
      ++rep.skipped;
      continue;
    }
    ++rep.n_queries;
    ap_sum += ap / static_cast<double>(hits);
    for (std::size_t k = first_hit; k <= rep.cmc.size(); ++k) rep.cmc[k - 1] += 1.0;
  }
  if (rep.n_queries > 0) {
    for (auto& v : rep.cmc) v /= static_cast<double>(rep.n_queries);
    rep.map = ap_sum / static_cast<double>(rep.n_queries);
  }
  rep.rank1 = rep.rank(1);
  rep.rank5 = rep.rank(5);
  rep.rank10 = rep.rank(10);
  return rep;
}

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline constexpr const char* kEvalCsvHeader = "method,distance,rank1,rank5,rank10,map,n_queries,skipped";

inline std::string eval_csv_row(const std::string& method, const EvalReport& r) {
  return method + "," + to_string(r.distance) + "," + fixed4(r.rank1) + "," + fixed4(r.rank5) + "," +
         fixed4(r.rank10) + "," + fixed4(r.map) + "," + std::to_string(r.n_queries) + "," +
         std::to_string(r.skipped);
}

}  // namespace lfm::metrics
