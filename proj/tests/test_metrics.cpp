#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lfm/metrics.hpp"
#include "lfm/rng.hpp"
#include "oracles.hpp"

namespace {

using namespace lfm::metrics;
using lfm::RngStream;

DistanceMatrix matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return {rows, cols, std::move(v)};
}

TEST(Distances, AnalyticCases) {
  const std::vector<double> a{1, 0, 0}, b{0, 1, 0};
  auto e = pairwise_distances<double>(a, a, 3, DistanceKind::euclidean);
  auto c = pairwise_distances<double>(a, a, 3, DistanceKind::cosine);
  EXPECT_EQ(e(0, 0), 0.0);
  EXPECT_EQ(c(0, 0), 0.0);
  e = pairwise_distances<double>(a, b, 3, DistanceKind::euclidean);
  c = pairwise_distances<double>(a, b, 3, DistanceKind::cosine);
  EXPECT_DOUBLE_EQ(e(0, 0), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(c(0, 0), 1.0);
  const std::vector<double> zero{0, 0, 0};
  EXPECT_THROW(pairwise_distances<double>(zero, a, 3, DistanceKind::cosine), lfm::NumericError);
  EXPECT_THROW(pairwise_distances<double>(a, zero, 3, DistanceKind::cosine), lfm::NumericError);
  EXPECT_NO_THROW(pairwise_distances<double>(zero, a, 3, DistanceKind::euclidean));
  const std::vector<double> bad{1, 2};
  EXPECT_THROW(pairwise_distances<double>(bad, a, 3, DistanceKind::euclidean), lfm::StructuralError);
  EXPECT_EQ(parse_distance("cosine"), DistanceKind::cosine);
  EXPECT_THROW(parse_distance("manhattan"), lfm::ConfigError);
}

TEST(Distances, MatchNaiveLoops) {
  RngStream r(5);
  std::vector<double> q(5 * 6), g(7 * 6);
  for (auto& v : q) v = r.uniform_real(-1, 1);
  for (auto& v : g) v = r.uniform_real(-1, 1);
  for (int kind : {0, 1}) {
    const auto got = pairwise_distances<double>(q, g, 6, kind == 0 ? DistanceKind::euclidean : DistanceKind::cosine);
    const auto want = lfm::oracle::naive_distances(q, g, 6, kind);
    ASSERT_EQ(got.rows, 5u);
    ASSERT_EQ(got.cols, 7u);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got.values[i], want[i], 1e-6);
  }
}

TEST(Evaluate, PerfectRanking) {
  const auto d = matrix(2, 3, {0.1, 0.5, 0.9, 0.8, 0.2, 0.7});
  const auto rep = evaluate(d, {{1, 2}, {0, 0}}, {{1, 2, 3}, {1, 1, 1}});
  EXPECT_EQ(rep.rank1, 1.0);
  EXPECT_EQ(rep.map, 1.0);
  EXPECT_EQ(rep.n_queries, 2u);
}

TEST(Evaluate, HandCaseFiveSixths) {
  // Hits at positions 1 and 3 of 5.
  const auto d = matrix(1, 5, {0.1, 0.2, 0.3, 0.4, 0.5});
  const auto rep = evaluate(d, {{7}, {0}}, {{7, 3, 7, 4, 5}, {1, 1, 1, 1, 1}});
  EXPECT_NEAR(rep.map, 5.0 / 6.0, 1e-15);
  EXPECT_EQ(rep.rank1, 1.0);
}

TEST(Evaluate, JunkExclusionToggleAndSkipped) {
  // Same id + same camera at distance 0 would be a trivial hit.
  const auto d = matrix(2, 3, {0.0, 0.5, 0.2, 0.1, 0.3, 0.4});
  const Labels q{{1, 9}, {0, 0}};
  const Labels g{{1, 1, 2}, {0, 1, 0}};
  const auto rep = evaluate(d, q, g);
  EXPECT_EQ(rep.n_queries, 1u);
  EXPECT_EQ(rep.skipped, 1u);
  EXPECT_EQ(rep.rank1, 0.0);  // after junk removal the id-2 item ranks first
  EXPECT_EQ(rep.rank5, 1.0);
  EXPECT_DOUBLE_EQ(rep.map, 0.5);
  EvalOptions keep;
  keep.exclude_same_camera = false;
  const auto rep2 = evaluate(d, q, g, keep);
  EXPECT_EQ(rep2.rank1, 1.0);
}

TEST(Evaluate, TiesBrokenByGalleryIndex) {
  const auto d = matrix(1, 3, {0.5, 0.5, 0.5});
  EXPECT_EQ(evaluate(d, {{1}, {0}}, {{2, 1, 1}, {1, 1, 1}}).rank1, 0.0);
  EXPECT_EQ(evaluate(d, {{1}, {0}}, {{1, 2, 2}, {1, 1, 1}}).rank1, 1.0);
}

TEST(Evaluate, MatchesBruteForceOracle) {
  RngStream r(2718);
  for (int inst = 0; inst < 20; ++inst) {
    const int nq = 1 + static_cast<int>(r.uniform_int(8));
    const int ng = 1 + static_cast<int>(r.uniform_int(12));
    const bool coarse = inst % 2 == 0;  // coarse distances force ties
    std::vector<double> dist(static_cast<std::size_t>(nq * ng));
    for (auto& v : dist) v = coarse ? static_cast<double>(r.uniform_int(4)) : r.uniform01();
    Labels q, g;
    for (int i = 0; i < nq; ++i) {
      q.ids.push_back(static_cast<int>(r.uniform_int(4)));
      q.cams.push_back(static_cast<int>(r.uniform_int(3)));
    }
    for (int j = 0; j < ng; ++j) {
      g.ids.push_back(static_cast<int>(r.uniform_int(4)));
      g.cams.push_back(static_cast<int>(r.uniform_int(3)));
    }
    for (bool exclude : {true, false}) {
      EvalOptions opts;
      opts.exclude_same_camera = exclude;
      const auto rep = evaluate(matrix(nq, ng, dist), q, g, opts);
      const auto want = lfm::oracle::brute_metrics(dist, nq, ng, q.ids, q.cams, g.ids, g.cams, exclude, 10);
      ASSERT_EQ(rep.n_queries, static_cast<std::size_t>(want.evaluated)) << "instance " << inst;
      ASSERT_EQ(rep.skipped, static_cast<std::size_t>(want.skipped));
      ASSERT_EQ(rep.map, want.map) << "instance " << inst;
      for (int k = 0; k < 10; ++k) ASSERT_EQ(rep.cmc[k], want.cmc[k]) << "instance " << inst << " k " << k + 1;
      EXPECT_LE(rep.rank1, rep.rank5);
      EXPECT_LE(rep.rank5, rep.rank10);
      EXPECT_GE(rep.map, 0.0);
      EXPECT_LE(rep.map, 1.0);
    }
  }
}

TEST(Evaluate, CmcMonotoneAndReachesOne) {
  RngStream r(3);
  const int nq = 6, ng = 9;
  std::vector<double> dist(nq * ng);
  for (auto& v : dist) v = r.uniform01();
  Labels q{{0, 1, 2, 0, 1, 2}, {0, 0, 0, 1, 1, 1}};
  Labels g{{0, 1, 2, 0, 1, 2, 0, 1, 2}, {2, 2, 2, 2, 2, 2, 2, 2, 2}};
  EvalOptions opts;
  opts.ks = {1, 5, 10, 20};
  const auto rep = evaluate(matrix(nq, ng, dist), q, g, opts);
  ASSERT_EQ(rep.cmc.size(), 20u);
  for (std::size_t k = 1; k < rep.cmc.size(); ++k) EXPECT_GE(rep.cmc[k], rep.cmc[k - 1]);
  EXPECT_EQ(rep.cmc.back(), 1.0);
  EXPECT_EQ(rep.rank(9), 1.0);
}

TEST(Evaluate, GalleryPermutationInvariance) {
  RngStream r(8);
  const int nq = 5, ng = 11;
  std::vector<double> dist(nq * ng);
  for (auto& v : dist) v = r.uniform01();
  Labels q, g;
  for (int i = 0; i < nq; ++i) {
    q.ids.push_back(i % 3);
    q.cams.push_back(0);
  }
  for (int j = 0; j < ng; ++j) {
    g.ids.push_back(j % 4);
    g.cams.push_back(1 + j % 2);
  }
  const auto base = evaluate(matrix(nq, ng, dist), q, g);
  std::vector<int> perm(ng);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = ng - 1; i > 0; --i) std::swap(perm[i], perm[r.uniform_int(i + 1)]);
  std::vector<double> pd(nq * ng);
  Labels pg;
  for (int j = 0; j < ng; ++j) {
    pg.ids.push_back(g.ids[perm[j]]);
    pg.cams.push_back(g.cams[perm[j]]);
    for (int i = 0; i < nq; ++i) pd[i * ng + j] = dist[i * ng + perm[j]];
  }
  const auto shuffled = evaluate(matrix(nq, ng, pd), q, pg);
  EXPECT_EQ(shuffled.cmc, base.cmc);
  EXPECT_EQ(shuffled.map, base.map);
}

TEST(Evaluate, EuclideanScaleInvariance) {
  RngStream r(13);
  std::vector<double> qe(4 * 5), ge(10 * 5);
  for (auto& v : qe) v = r.uniform_real(-1, 1);
  for (auto& v : ge) v = r.uniform_real(-1, 1);
  const Labels q{{0, 1, 2, 3}, {0, 0, 0, 0}};
  const Labels g{{0, 1, 2, 3, 0, 1, 2, 3, 4, 4}, {1, 1, 1, 1, 2, 2, 2, 2, 1, 2}};
  const auto base = evaluate(pairwise_distances<double>(qe, ge, 5, DistanceKind::euclidean), q, g);
  for (double c : {0.01, 3.0, 1000.0}) {
    auto qs = qe, gs = ge;
    for (auto& v : qs) v *= c;
    for (auto& v : gs) v *= c;
    const auto rep = evaluate(pairwise_distances<double>(qs, gs, 5, DistanceKind::euclidean), q, g);
    EXPECT_EQ(rep.cmc, base.cmc) << c;
    EXPECT_EQ(rep.map, base.map) << c;
  }
}

TEST(Evaluate, RandomRankingBaseline) {
  // Mean AP of random distances approaches the closed-form expectation.
  RngStream r(21);
  const int G = 20, R = 3, trials = 20000;
  double sum = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> dist(G);
    for (auto& v : dist) v = r.uniform01();
    Labels g;
    for (int j = 0; j < G; ++j) {
      g.ids.push_back(j < R ? 1 : 2);
      g.cams.push_back(1);
    }
    sum += evaluate(matrix(1, G, dist), {{1}, {0}}, g).map;
  }
  EXPECT_NEAR(sum / trials, lfm::oracle::random_ranking_ap(G, R), 0.01);
}

TEST(EvalCsv, RowFormat) {
  EvalReport r;
  r.rank1 = 0.5;
  r.rank5 = 0.75;
  r.rank10 = 1.0;
  r.map = 1.0 / 3.0;
  r.n_queries = 25;
  r.skipped = 0;
  EXPECT_STREQ(kEvalCsvHeader, "method,distance,rank1,rank5,rank10,map,n_queries,skipped");
  EXPECT_EQ(eval_csv_row("lfm", r), "lfm,euclidean,0.5000,0.7500,1.0000,0.3333,25,0");
}

}  // namespace
