// Acceptance runner: one PASS/FAIL line per criterion, raw artifacts kept
// under the output directory (default ./acceptance_out).
//
//   acceptance [out_dir] [--only=1,3,8]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "lfm/attack.hpp"
#include "lfm/experiment/config.hpp"
#include "lfm/experiment/runner.hpp"
#include "lfm/masking.hpp"
#include "lfm/metrics.hpp"
#include "lfm/nn/grad_check.hpp"
#include "lfm/nn/loss.hpp"
#include "oracles.hpp"

namespace {

namespace fs = std::filesystem;
namespace ex = lfm::experiment;
using lfm::FeatureBlock;
using lfm::LfmConfig;
using lfm::RngStream;

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (failures.size() < 5) failures.push_back(what);
    }
  }
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Masking conformance

Outcome masking_conformance(const fs::path&) {
  Outcome o;
  FeatureBlock<float> ramp(6, 8, 12, 10);
  float v = -3.0f;
  for (auto& x : ramp.values()) x = (v += 0.37f);

  auto cfg = LfmConfig::defaults_for(8);
  cfg.probability = 0.0;
  o.require(lfm::lfm_apply(ramp, cfg, RngStream(1), true).block == ramp, "p = 0 changed the block");
  cfg = LfmConfig::defaults_for(8);
  cfg.probability = 1.0;
  cfg.num_masked_channels = 0;
  o.require(lfm::lfm_apply(ramp, cfg, RngStream(2), true).block == ramp, "N = 0 changed the block");
  cfg.num_masked_channels = 4;
  o.require(lfm::lfm_apply(ramp, cfg, RngStream(3), false).block == ramp, "eval mode changed the block");

  // Whole-model eval identity: LFM on vs. off with identical weights.
  {
    lfm::nn::MiniResNetConfig mc;
    mc.num_classes = 10;
    lfm::nn::MiniResNet<float> plain(mc, 5);
    mc.lfm_enabled = true;
    mc.lfm.probability = 1.0;
    lfm::nn::MiniResNet<float> masked(mc, 5);
    FeatureBlock<float> x(3, 3, 64, 32);
    RngStream r(6);
    for (auto& p : x.values()) p = static_cast<float>(r.uniform01());
    o.require(plain.forward(x, lfm::nn::Mode::eval).embedding == masked.forward(x, lfm::nn::Mode::eval).embedding,
              "model eval output depends on LFM");
  }

  // Sentinel 2.0 lies outside every possible fill.
  const std::size_t B = 200, C = 64, H = 32, W = 16;
  const FeatureBlock<float> sentinel(B, C, H, W, 2.0f);
  cfg = LfmConfig::defaults_for(C);
  cfg.probability = 1.0;
  const auto res = lfm::lfm_apply(sentinel, cfg, RngStream(99, "lfm"), true);
  std::size_t rects = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto& d = res.decisions[b];
    std::map<int, lfm::MaskRect> rect_of;
    for (const auto& cm : d.rects)
      if (cm.rect) rect_of[cm.channel] = *cm.rect;
    std::size_t changed = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const auto it = rect_of.find(static_cast<int>(c));
      bool any = false, constant = true, local = true;
      float first = 0.0f;
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const float val = res.block(b, c, y, x);
          const bool inside = it != rect_of.end() && it->second.contains(static_cast<int>(x), static_cast<int>(y));
          if ((val != 2.0f) != inside) local = false;
          if (!inside) continue;
          if (!any) first = val;
          any = true;
          if (val != first) constant = false;
        }
      o.require(local, "modified pixels outside the logged rectangle");
      o.require(constant, "rectangle is not constant");
      if (!any) continue;
      ++changed;
      const auto& r = it->second;
      o.require(r.x0 >= 0 && r.y0 >= 0 && r.x0 + r.w_px <= static_cast<int>(W) && r.y0 + r.h_px <= static_cast<int>(H),
                "rectangle out of bounds");
      o.require(r.area_fraction >= cfg.area_low && r.area_fraction <= cfg.area_high, "area fraction out of range");
      o.require(first >= 0.0f && first < 1.0f, "fill outside [0, 1)");
    }
    o.require(changed == cfg.num_masked_channels, "sample " + std::to_string(b) + " modified " +
                                                      std::to_string(changed) + " channels");
    rects += changed;
  }

  const FeatureBlock<float> gate_input(10000, 1, 4, 4, 0.5f);
  const auto gated = lfm::lfm_apply(gate_input, LfmConfig::defaults_for(1), RngStream(17, "gate"), true);
  std::size_t applied = 0;
  for (const auto& d : gated.decisions) applied += d.applied;
  const double freq = static_cast<double>(applied) / 10000.0;
  o.require(freq >= 0.139 && freq <= 0.161, "gate frequency " + fmt(freq));
  o.detail = "sentinel rects " + std::to_string(rects) + ", gate frequency " + fmt(freq);
  return o;
}

// ---------------------------------------------------------------------------
// 2. Monte-Carlo parity against the replay oracle

Outcome monte_carlo_parity(const fs::path&) {
  Outcome o;
  const int n = 1000000, H = 32, W = 16;
  const auto cfg = LfmConfig::defaults_for(16);
  auto single = cfg;
  single.max_attempts = 1;

  // Same stream: draw-for-draw identical.
  {
    RngStream a(5, "same"), b(5, "same");
    int mismatches = 0;
    for (int i = 0; i < 20000; ++i) {
      const auto r = lfm::sample_mask_rect(a, H, W, cfg);
      const auto t = lfm::oracle::replay_rect(b, H, W, cfg.area_low, cfg.area_high, cfg.aspect_low,
                                              cfg.aspect_high, cfg.max_attempts);
      const bool same = r.has_value() == t.accepted &&
                        (!t.accepted || (r->x0 == t.x && r->y0 == t.y && r->w_px == t.w && r->h_px == t.h &&
                                         r->area_fraction == t.area_fraction));
      mismatches += !same;
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " draw-for-draw mismatches");
  }

  // Independent streams, 10^6 single attempts each.
  RngStream impl(1001, "impl"), orc(2002, "oracle");
  double acc_i = 0, acc_o = 0;
  std::vector<double> hi(10), ho(10);
  double si = 0, so = 0;
  auto bin = [&](double f) { return std::min(9, static_cast<int>((f - cfg.area_low) / ((cfg.area_high - cfg.area_low) / 10))); };
  for (int i = 0; i < n; ++i) {
    if (const auto r = lfm::sample_mask_rect(impl, H, W, single)) {
      acc_i += 1;
      si += r->area_fraction;
      hi[bin(r->area_fraction)] += 1;
    }
    const auto t = lfm::oracle::replay_rect(orc, H, W, cfg.area_low, cfg.area_high, cfg.aspect_low, cfg.aspect_high, 1);
    if (t.accepted) {
      acc_o += 1;
      so += t.area_fraction;
      ho[bin(t.area_fraction)] += 1;
    }
  }
  const auto quad = lfm::oracle::rect_quadrature(H, W, cfg.area_low, cfg.area_high, cfg.aspect_low, cfg.aspect_high, 2000);
  const double pi = acc_i / n, po = acc_o / n;
  const double sigma = std::sqrt(quad.accept_prob * (1 - quad.accept_prob) / n);
  o.require(std::abs(pi - po) <= 3.0 * std::sqrt(2.0) * sigma, "acceptance differs from oracle: " + fmt(pi, 5) + " vs " + fmt(po, 5));
  o.require(std::abs(pi - quad.accept_prob) <= 3.0 * sigma + 1e-4, "acceptance differs from quadrature");
  const double mi = si / acc_i, mo = so / acc_o;
  o.require(std::abs(mi - mo) <= 3.0 * 0.185 * std::sqrt(1.0 / acc_i + 1.0 / acc_o), "mean area differs from oracle");
  const double chi = lfm::oracle::chi_square_two_sample(hi, ho);
  o.require(chi < 21.67, "area histogram chi2 " + fmt(chi, 2));  // chi2(9) at 0.01
  o.detail = "accept " + fmt(pi, 5) + " vs oracle " + fmt(po, 5) + " vs quadrature " + fmt(quad.accept_prob, 5) +
             ", mean area " + fmt(mi, 5) + " vs " + fmt(mo, 5) + ", chi2(9) " + fmt(chi, 2);
  return o;
}

// ---------------------------------------------------------------------------
// 3. Gradient correctness on the mini network

Outcome gradient_correctness(const fs::path&) {
  Outcome o;
  lfm::nn::MiniResNetConfig mc;
  mc.num_classes = 10;
  FeatureBlock<double> x(2, 3, 64, 32);
  RngStream r(7, "images");
  for (auto& v : x.values()) v = r.uniform01();
  const std::vector<int> labels{3, 8};
  // About 10^5 ReLU/maxpool decisions: a 1e-3 step nearly always crosses one,
  // while 1e-6 in double keeps round-off far below the tolerance.
  const double step = 1e-6;

  lfm::nn::MiniResNet<double> plain(mc, 11);
  const auto a = lfm::nn::grad_check(plain, x, labels, nullptr, RngStream(12), 200, step);
  o.require(a.max_rel_error <= 1e-4, "no mask: " + fmt(a.max_rel_error, 8) + " at " + a.worst_param);

  mc.lfm_enabled = true;
  mc.lfm.probability = 1.0;
  lfm::nn::MiniResNet<double> masked(mc, 13);
  const RngStream mask_rng(14);
  const auto decisions = masked.forward(x, lfm::nn::Mode::train, &mask_rng).decisions;
  const auto b = lfm::nn::grad_check(masked, x, labels, &decisions, RngStream(15), 200, step);
  o.require(b.max_rel_error <= 1e-4, "frozen mask: " + fmt(b.max_rel_error, 8) + " at " + b.worst_param);

  masked.params().zero_grad();
  const auto out = masked.forward(x, lfm::nn::Mode::train, nullptr, &decisions);
  masked.backward(lfm::nn::softmax_cross_entropy<double>(out.logits, mc.num_classes, labels, 0.0).d_logits);
  const auto& g = masked.stem_grad();
  std::size_t masked_positions = 0, nonzero = 0;
  for (const auto& d : decisions)
    for (const auto& cm : d.rects) {
      if (!cm.rect) continue;
      for (int y = cm.rect->y0; y < cm.rect->y0 + cm.rect->h_px; ++y)
        for (int xx = cm.rect->x0; xx < cm.rect->x0 + cm.rect->w_px; ++xx) {
          ++masked_positions;
          nonzero += g(d.sample_id, cm.channel, y, xx) != 0.0;
        }
    }
  o.require(masked_positions > 0 && nonzero == 0, std::to_string(nonzero) + " masked positions with gradient");
  o.detail = "max rel err " + fmt(a.max_rel_error, 8) + " (" + std::to_string(a.checked) + " params) / " +
             fmt(b.max_rel_error, 8) + " (" + std::to_string(b.checked) + " params, frozen mask), " +
             std::to_string(masked_positions) + " masked positions with zero gradient";
  return o;
}

// ---------------------------------------------------------------------------
// 4. Metric oracle parity

Outcome metric_parity(const fs::path&) {
  Outcome o;
  using lfm::metrics::Labels;
  {
    const lfm::metrics::DistanceMatrix d{1, 5, {0.1, 0.2, 0.3, 0.4, 0.5}};
    const auto rep = lfm::metrics::evaluate(d, Labels{{7}, {0}}, Labels{{7, 3, 7, 4, 5}, {1, 1, 1, 1, 1}});
    o.require(std::abs(rep.map - 5.0 / 6.0) < 1e-15, "hand case AP " + fmt(rep.map, 6));
  }
  RngStream r(2718, "metric-acceptance");
  int compared = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const int nq = 1 + static_cast<int>(r.uniform_int(8));
    const int ng = 1 + static_cast<int>(r.uniform_int(12));
    std::vector<double> dist(static_cast<std::size_t>(nq * ng));
    for (auto& v : dist) v = inst % 2 == 0 ? static_cast<double>(r.uniform_int(4)) : r.uniform01();
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
      lfm::metrics::EvalOptions opts;
      opts.exclude_same_camera = exclude;
      const auto rep = lfm::metrics::evaluate(lfm::metrics::DistanceMatrix{static_cast<std::size_t>(nq),
                                                                           static_cast<std::size_t>(ng), dist},
                                              q, g, opts);
      const auto want = lfm::oracle::brute_metrics(dist, nq, ng, q.ids, q.cams, g.ids, g.cams, exclude, 10);
      bool same = rep.map == want.map && rep.n_queries == static_cast<std::size_t>(want.evaluated);
      for (int k = 0; k < 10; ++k) same = same && rep.cmc[k] == want.cmc[k];
      o.require(same, "instance " + std::to_string(inst) + (exclude ? " (junk excluded)" : ""));
      ++compared;
    }
  }
  o.detail = std::to_string(compared) + " exact comparisons + hand case 5/6";
  return o;
}

// ---------------------------------------------------------------------------
// Shared desk-scale models for 5 and 6

constexpr int kSeeds = 5;

struct DeskModels {
  ex::ExperimentConfig base;
  lfm::data::Dataset ds;
  lfm::data::SplitSpec split;
  std::vector<lfm::nn::MiniResNet<float>> baseline, lfm_models;
  std::vector<double> train_seconds;
};

ex::ExperimentConfig desk_config() {
  return ex::ExperimentConfig{};  // 75 ids x 8 views, 50 train ids, 30 epochs
}

DeskModels& desk_models() {
  static std::unique_ptr<DeskModels> m;
  if (m) return *m;
  m = std::make_unique<DeskModels>();
  m->base = desk_config();
  m->ds = lfm::data::synth_generate(m->base.data.synth);
  m->split = lfm::data::make_split(m->ds, m->base.data.train_ids);
  for (int s = 1; s <= kSeeds; ++s) {
    for (bool lfm_on : {false, true}) {
      auto c = ex::with_method(m->base, lfm_on ? "lfm" : "baseline");
      const auto t0 = std::chrono::steady_clock::now();
      auto trained = ex::train_model(c, m->ds, m->split, static_cast<std::uint64_t>(s));
      m->train_seconds.push_back(seconds_since(t0));
      (lfm_on ? m->lfm_models : m->baseline).push_back(std::move(trained.model));
      std::cerr << "  trained " << (lfm_on ? "lfm" : "baseline") << " seed " << s << " in "
                << fmt(m->train_seconds.back(), 1) << " s\n";
    }
  }
  return *m;
}

// ---------------------------------------------------------------------------
// 5. Generalization direction

Outcome generalization_direction(const fs::path& out) {
  Outcome o;
  auto& m = desk_models();
  std::vector<double> map_b, map_l, gap_b, gap_l;
  std::string csv = "method,seed,train_acc,rank1,map,gap\n";
  for (int i = 0; i < kSeeds; ++i) {
    for (bool lfm_on : {false, true}) {
      auto& model = (lfm_on ? m.lfm_models : m.baseline)[i];
      const auto c = ex::with_method(m.base, lfm_on ? "lfm" : "baseline");
      const auto rep = ex::evaluate_model(model, m.ds, m.split, c);
      const double acc = ex::train_accuracy(model, m.ds, m.split);
      const double gap = acc - rep.rank1;
      (lfm_on ? map_l : map_b).push_back(rep.map);
      (lfm_on ? gap_l : gap_b).push_back(gap);
      csv += c.method_name() + "," + std::to_string(i + 1) + "," + fmt(acc) + "," + fmt(rep.rank1) + "," +
             fmt(rep.map) + "," + fmt(gap) + "\n";
    }
  }
  fs::create_directories(out / "generalization");
  lfm::write_file_text(out / "generalization" / "runs.csv", csv);
  const double mb = ex::median(map_b), ml = ex::median(map_l), gb = ex::median(gap_b), gl = ex::median(gap_l);
  o.require(ml >= mb - 0.005, "median mAP lfm " + fmt(ml) + " < baseline " + fmt(mb) + " - 0.005");
  o.require(gl <= gb, "median gap lfm " + fmt(gl) + " > baseline " + fmt(gb));
  const double slowest = *std::max_element(m.train_seconds.begin(), m.train_seconds.end());
  o.require(slowest <= 900.0, "training run took " + fmt(slowest, 1) + " s");
  o.detail = "median mAP baseline " + fmt(mb) + " lfm " + fmt(ml) + ", median gap baseline " + fmt(gb) + " lfm " +
             fmt(gl) + ", slowest run " + fmt(slowest, 1) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 6. Robustness direction

Outcome robustness_direction(const fs::path& out) {
  Outcome o;
  auto& m = desk_models();
  const auto queries = lfm::attack::retrieval_set(m.ds, m.split.query);
  const auto gallery = lfm::attack::retrieval_set(m.ds, m.split.gallery);
  fs::create_directories(out / "robustness");
  int wins = 0;
  std::string summary = "pair,surrogate_seed,baseline_attacked_rank1,lfm_attacked_rank1,lfm_at_least_baseline\n";
  for (int i = 0; i < kSeeds; ++i) {
    const std::uint64_t surrogate_seed = 100 + static_cast<std::uint64_t>(i + 1);
    auto surrogate = ex::train_model(ex::with_method(m.base, "baseline"), m.ds, m.split, surrogate_seed).model;
    lfm::attack::AttackConfig cfg;
    cfg.seed = surrogate_seed;
    const auto rb = lfm::attack::transfer_evaluate(m.baseline[i], surrogate, queries, gallery, cfg);
    const auto rl = lfm::attack::transfer_evaluate(m.lfm_models[i], surrogate, queries, gallery, cfg);
    lfm::write_file_text(out / "robustness" / ("pair" + std::to_string(i + 1) + "_baseline.csv"),
                         lfm::attack::attack_csv("baseline", rb));
    lfm::write_file_text(out / "robustness" / ("pair" + std::to_string(i + 1) + "_lfm.csv"),
                         lfm::attack::attack_csv("lfm", rl));
    const bool win = rl.attacked.rank1 >= rb.attacked.rank1;
    wins += win;
    summary += std::to_string(i + 1) + "," + std::to_string(surrogate_seed) + "," + fmt(rb.attacked.rank1) + "," +
               fmt(rl.attacked.rank1) + "," + (win ? "1" : "0") + "\n";
    o.detail += (o.detail.empty() ? "" : "; ") + fmt(rb.attacked.rank1, 2) + " vs " + fmt(rl.attacked.rank1, 2);
    std::cerr << "  pair " << i + 1 << ": baseline " << fmt(rb.clean.rank1, 2) << " -> " << fmt(rb.attacked.rank1, 2)
              << ", lfm " << fmt(rl.clean.rank1, 2) << " -> " << fmt(rl.attacked.rank1, 2) << "\n";
  }
  lfm::write_file_text(out / "robustness" / "summary.csv", summary);
  o.require(wins >= 3, "lfm at least baseline in only " + std::to_string(wins) + "/5 pairs");
  o.detail = std::to_string(wins) + "/5 pairs (attacked rank1 baseline vs lfm: " + o.detail + ")";
  return o;
}

// ---------------------------------------------------------------------------
// 7. Determinism of every command

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

Outcome determinism(const fs::path& out) {
  Outcome o;
  std::map<std::string, std::string> runs[2];
  for (int run = 0; run < 2; ++run) {
    const auto dir = out / "determinism" / ("run" + std::to_string(run));
    fs::remove_all(dir);
    ex::ExperimentConfig c;
    c.data.synth = {9, 16, 4, 3};
    c.data.train_ids = 10;
    c.model.stem_channels = 8;
    c.model.stage_widths = {8, 8, 16};
    c.model.blocks_per_stage = 1;
    c.train.epochs = 2;
    c.train.batch_size = 16;
    c.lfm.enabled = true;
    c.attack.cfg.steps = 3;
    c.run.seed = 3;
    c.run.out = dir.string();
    ex::cmd_gen_data(c);
    const auto t = ex::cmd_train(c, dir / "target.lfmc", dir / "target_log.csv");
    auto sc = ex::with_method(c, "baseline");
    sc.run.seed = 4;
    const auto s = ex::cmd_train(sc, dir / "surrogate.lfmc", dir / "surrogate_log.csv");
    ex::cmd_eval(c, t.checkpoint);
    ex::cmd_attack(c, t.checkpoint, s.checkpoint);
    auto gc = c;
    gc.attack.kind = "gaussian";
    gc.attack.cfg.noise_sigma = 0.05;
    ex::cmd_attack(gc, t.checkpoint, s.checkpoint, dir / "attack_gaussian.csv");
    auto sw = c;
    sw.sweep.param = "lfm.probability";
    sw.sweep.values = {"0.1", "0.5"};
    sw.sweep.plot = true;
    sw.train.epochs = 1;
    ex::cmd_sweep(sw);
    auto cmp = c;
    cmp.train.epochs = 1;
    cmp.compare.methods = {"baseline", "lfm+cutout"};
    ex::cmd_compare(cmp);
    ex::cmd_viz_masks(c, t.checkpoint, 1);
    runs[run] = snapshot(dir);
  }
  o.require(runs[0].size() == runs[1].size(), "file sets differ");
  std::size_t bytes = 0;
  for (const auto& [name, content] : runs[0]) {
    const auto it = runs[1].find(name);
    o.require(it != runs[1].end() && it->second == content, name + " differs");
    bytes += content.size();
  }
  std::set<std::string> kinds;
  for (const auto& [name, content] : runs[0]) kinds.insert(fs::path(name).extension().string());
  for (const char* k : {".csv", ".lfmc", ".pgm", ".lfmd", ".log"})
    o.require(kinds.count(k) == 1, std::string("no ") + k + " output compared");
  o.detail = std::to_string(runs[0].size()) + " files, " + std::to_string(bytes) + " bytes identical across reruns";
  return o;
}

// ---------------------------------------------------------------------------
// 8. Sweep harness completeness

Outcome sweep_harness(const fs::path& out) {
  Outcome o;
  const auto root = out / "sweeps";
  fs::remove_all(root);
  auto base = desk_config();
  base.train.epochs = 3;
  base.lfm.enabled = true;
  base.sweep.seeds = 2;
  base.run.seed = 1;

  struct Plan {
    std::string name, param;
    std::vector<std::string> values;
    ex::ExperimentConfig cfg;
  };
  auto channels = base;
  channels.model.stem_channels = 64;  // the value list reaches 64 masked channels
  channels.lfm.cfg.probability = 0.05;
  auto probability = base;  // N = half the stem channels
  std::vector<Plan> plans{{"channels", "lfm.num_masked_channels", {"4", "8", "16", "32", "64"}, channels},
                          {"probability", "lfm.probability", {"0.05", "0.10", "0.15", "0.30"}, probability}};
  for (auto& p : plans) {
    const auto dir = root / p.name;
    p.cfg.run.out = dir.string();
    p.cfg.sweep.param = p.param;
    p.cfg.sweep.values = p.values;
    ex::cmd_gen_data(p.cfg);
    const auto res = ex::cmd_sweep(p.cfg);
    std::ifstream in(res.rows);
    std::string line;
    std::getline(in, line);
    o.require(line == ex::kSweepHeader, p.name + ": bad header");
    std::set<std::pair<std::string, std::string>> cells;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
      if (f.size() != 5) {
        o.require(false, p.name + ": malformed row " + line);
        continue;
      }
      o.require(f[0] == p.param, p.name + ": wrong parameter column");
      cells.insert({f[1], f[2]});
      for (int k : {3, 4}) {
        const double v = std::stod(f[k]);
        o.require(f[k].size() == 6 && v >= 0.0 && v <= 1.0, p.name + ": bad metric cell " + f[k]);
      }
    }
    const std::size_t expected = p.values.size() * p.cfg.sweep.seeds;
    o.require(rows == expected && cells.size() == expected, p.name + ": " + std::to_string(rows) + " rows, " +
                                                                std::to_string(cells.size()) + " distinct cells");
    for (const auto& v : p.values)
      for (std::size_t s = 0; s < p.cfg.sweep.seeds; ++s)
        o.require(cells.count({v, std::to_string(p.cfg.run.seed + s)}) == 1, p.name + ": missing cell " + v);
    o.detail += (o.detail.empty() ? "" : "; ") + p.name + " " + std::to_string(rows) + " rows, best " + res.best_value;
  }
  return o;
}

// ---------------------------------------------------------------------------

struct Criterion {
  int id;
  const char* name;
  double time_limit;  // seconds; 0 = none beyond the ctest timeout
  std::function<Outcome(const fs::path&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  fs::path out = "acceptance_out";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.rfind("--only=", 0) == 0) {
      for (const auto& s : ex::detail::split_list(a.substr(7))) only.insert(std::stoi(s));
    } else {
      out = a;
    }
  }
  fs::create_directories(out);

  const std::vector<Criterion> criteria{
      {1, "masking conformance", 10, masking_conformance},
      {2, "Monte-Carlo oracle parity", 60, monte_carlo_parity},
      {3, "gradient correctness", 120, gradient_correctness},
      {4, "metric oracle parity", 5, metric_parity},
      {5, "desk-scale generalization direction", 0, generalization_direction},
      {6, "robustness direction under transfer PGD", 0, robustness_direction},
      {7, "determinism", 0, determinism},
      {8, "sweep harness", 0, sweep_harness},
  };

  int failed = 0;
  std::string report;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(out);
    } catch (const std::exception& e) {
      o.pass = false;
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    if (c.time_limit > 0 && secs > c.time_limit) {
      o.pass = false;
      o.failures.push_back("took " + fmt(secs, 1) + " s, limit " + fmt(c.time_limit, 0) + " s");
    }
    std::string line = "criterion " + std::to_string(c.id) + " (" + c.name + "): " + (o.pass ? "PASS" : "FAIL") +
                       " [" + fmt(secs, 1) + " s] " + o.detail;
    for (const auto& f : o.failures) line += " | " + f;
    std::cout << line << std::endl;
    report += line + "\n";
    failed += !o.pass;
  }
  lfm::write_file_text(out / "acceptance_summary.txt", report);
  return failed == 0 ? 0 : 1;
}
