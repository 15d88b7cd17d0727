#pragma once

// Training, evaluation and the experiment commands behind the CLI. Every
// command validates its whole configuration before writing anything, and
// rerunning a command with the same configuration reproduces its outputs
// byte for byte.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lfm/attack.hpp"
#include "lfm/binary_io.hpp"
#include "lfm/data/batches.hpp"
#include "lfm/data/dataset.hpp"
#include "lfm/data/synth.hpp"
#include "lfm/errors.hpp"
#include "lfm/experiment/config.hpp"
#include "lfm/experiment/plot.hpp"
#include "lfm/image_io.hpp"
#include "lfm/masking.hpp"
#include "lfm/metrics.hpp"
#include "lfm/nn/checkpoint.hpp"
#include "lfm/nn/inference.hpp"
#include "lfm/nn/loss.hpp"
#include "lfm/nn/model.hpp"
#include "lfm/nn/optim.hpp"

namespace lfm::experiment {

namespace fs = std::filesystem;
using metrics::fixed4;

/// Exclusive per-output-directory lock, released on destruction.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".lfm.lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) throw IoError("output directory " + dir.string() + " is locked or unwritable (" + path_.string() + ")");
  }
  ~OutputLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kTrainLogHeader = "epoch,train_loss,train_acc,seed";

inline std::string train_log_csv(const std::vector<EpochLog>& log) {
  std::string s = std::string(kTrainLogHeader) + "\n";
  for (const auto& e : log)
    s += std::to_string(e.epoch) + "," + fixed4(e.train_loss) + "," + fixed4(e.train_acc) + "," +
         std::to_string(e.seed) + "\n";
  return s;
}

struct TrainResult {
  nn::MiniResNet<float> model;
  std::vector<EpochLog> log;
};

inline data::Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
  const auto path = cfg.dataset_path();
  if (!fs::exists(path)) throw IoError("dataset not found at " + path.string() + " (run gen-data first)");
  return data::load_dataset(path);
}

/// SGD training on the train split. Shuffling/augmentation use
/// RngStream(seed, "data"); stochastic layers use RngStream(seed, "layers", epoch, step).
inline TrainResult train_model(const ExperimentConfig& cfg, const data::Dataset& ds,
                               const data::SplitSpec& split, std::uint64_t seed) {
  TrainResult r{nn::MiniResNet<float>(cfg.model_config(split.num_classes()), seed), {}};
  nn::OptState<float> opt;
  opt.schedule = cfg.schedule();
  opt.momentum = cfg.train.momentum;
  opt.weight_decay = cfg.train.weight_decay;
  const RngStream data_rng(seed, "data");
  const auto augment = cfg.augment();
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    opt.epoch = epoch;
    auto stream = data::make_batches<float>(ds, split, data::Role::train, cfg.train.batch_size, data_rng, epoch, augment);
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0, step = 0;
    while (auto batch = stream.next()) {
      const RngStream layer_rng(seed, "layers", epoch, step++);
      const auto out = r.model.forward(batch->images, nn::Mode::train, &layer_rng);
      const auto loss = nn::softmax_cross_entropy<float>(out.logits, split.num_classes(), batch->labels,
                                                         cfg.train.label_smoothing);
      r.model.backward(loss.d_logits);
      nn::sgd_step(r.model.params(), opt);
      const auto pred = nn::argmax_rows<float>(out.logits, split.num_classes());
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch->labels[i];
      loss_sum += loss.loss * static_cast<double>(pred.size());
      seen += pred.size();
    }
    r.log.push_back({epoch, loss_sum / static_cast<double>(seen),
                     static_cast<double>(correct) / static_cast<double>(seen), seed});
  }
  return r;
}

/// Eval-mode classification accuracy on the unaugmented train split.
inline double train_accuracy(nn::MiniResNet<float>& model, const data::Dataset& ds, const data::SplitSpec& split) {
  auto stream = data::make_batches<float>(ds, split, data::Role::train, 64, RngStream(0), 0, {});
  std::size_t correct = 0, seen = 0;
  while (auto batch = stream.next()) {
    const auto out = model.forward(batch->images, nn::Mode::eval);
    const auto pred = nn::argmax_rows<float>(out.logits, model.config().num_classes);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch->labels[i];
    seen += pred.size();
  }
  return static_cast<double>(correct) / static_cast<double>(seen);
}

/// Query-vs-gallery retrieval with the test split (or gallery-vs-gallery
/// when eval.query_set = gallery).
inline metrics::EvalReport evaluate_model(nn::MiniResNet<float>& model, const data::Dataset& ds,
                                          const data::SplitSpec& split, const ExperimentConfig& cfg) {
  const auto& q_idx = cfg.eval.query_set == "gallery" ? split.gallery : split.query;
  const auto queries = attack::retrieval_set(ds, q_idx);
  const auto gallery = attack::retrieval_set(ds, split.gallery);
  const auto q_emb = nn::extract_embeddings(model, queries.images);
  const auto g_emb = nn::extract_embeddings(model, gallery.images);
  const auto dist = metrics::pairwise_distances<float>(q_emb, g_emb, model.config().embedding_dim(), cfg.eval.distance);
  return metrics::evaluate(dist, queries.labels, gallery.labels, cfg.eval_options(), cfg.eval.distance);
}

inline nn::MiniResNet<float> load_model(const ExperimentConfig& cfg, const data::SplitSpec& split, const fs::path& ckpt) {
  if (!fs::exists(ckpt)) throw IoError("checkpoint not found: " + ckpt.string());
  nn::MiniResNet<float> model(cfg.model_config(split.num_classes()), 0);
  nn::load_checkpoint(model.params(), ckpt);
  return model;
}

// ---------------------------------------------------------------------------
// Commands

inline constexpr const char* kManifestHeader = "index,identity,camera,role";

struct GenDataOutputs {
  fs::path dataset;
  fs::path manifest;
  std::size_t samples = 0;
};

inline GenDataOutputs cmd_gen_data(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto ds = data::synth_generate(cfg.data.synth);
  const auto split = data::make_split(ds, cfg.data.train_ids);
  OutputLock lock(cfg.out_dir());
  GenDataOutputs out{cfg.dataset_path(), cfg.out_dir() / "manifest.csv", ds.size()};
  if (out.dataset.has_parent_path()) fs::create_directories(out.dataset.parent_path());
  data::save_dataset(ds, out.dataset);
  std::vector<std::string> role(ds.size());
  for (auto i : split.train) role[i] = "train";
  for (auto i : split.query) role[i] = "query";
  for (auto i : split.gallery) role[i] = "gallery";
  std::string csv = std::string(kManifestHeader) + "\n";
  for (std::size_t i = 0; i < ds.size(); ++i)
    csv += std::to_string(i) + "," + std::to_string(ds.samples[i].identity) + "," +
           std::to_string(ds.samples[i].camera) + "," + role[i] + "\n";
  write_file_text(out.manifest, csv);
  return out;
}

struct TrainOutputs {
  fs::path checkpoint;
  fs::path log;
};

inline TrainOutputs cmd_train(const ExperimentConfig& cfg, std::optional<fs::path> checkpoint = {},
                              std::optional<fs::path> log = {}) {
  cfg.validate();
  const auto ds = load_experiment_dataset(cfg);
  const auto split = data::make_split(ds, cfg.data.train_ids);
  OutputLock lock(cfg.out_dir());
  TrainOutputs out{checkpoint.value_or(cfg.out_dir() / "model.lfmc"), log.value_or(cfg.out_dir() / "train_log.csv")};
  auto result = train_model(cfg, ds, split, cfg.run.seed);
  nn::save_checkpoint(result.model.params(), out.checkpoint);
  write_file_text(out.log, train_log_csv(result.log));
  return out;
}

inline fs::path cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, std::optional<fs::path> csv = {}) {
  cfg.validate();
  const auto ds = load_experiment_dataset(cfg);
  const auto split = data::make_split(ds, cfg.data.train_ids);
  auto model = load_model(cfg, split, checkpoint);
  OutputLock lock(cfg.out_dir());
  const auto report = evaluate_model(model, ds, split, cfg);
  const auto path = csv.value_or(cfg.out_dir() / "eval.csv");
  write_file_text(path, std::string(metrics::kEvalCsvHeader) + "\n" + metrics::eval_csv_row(cfg.method_name(), report) + "\n");
  return path;
}

inline fs::path cmd_attack(const ExperimentConfig& cfg, const fs::path& target_ckpt, const fs::path& surrogate_ckpt,
                           std::optional<fs::path> csv = {}) {
  cfg.validate();
  for (const auto& p : {target_ckpt, surrogate_ckpt})
    if (!fs::exists(p)) throw IoError("checkpoint not found: " + p.string());
  if (read_file_bytes(target_ckpt) == read_file_bytes(surrogate_ckpt))
    throw ConfigError("target and surrogate checkpoints are identical; a transfer attack needs two models");
  const auto ds = load_experiment_dataset(cfg);
  const auto split = data::make_split(ds, cfg.data.train_ids);
  auto target = load_model(cfg, split, target_ckpt);
  // The surrogate is a plain network: masking never runs outside training anyway.
  auto surrogate_cfg = cfg;
  surrogate_cfg.lfm.enabled = false;
  auto surrogate = load_model(surrogate_cfg, split, surrogate_ckpt);
  OutputLock lock(cfg.out_dir());
  const auto queries = attack::retrieval_set(ds, split.query);
  const auto gallery = attack::retrieval_set(ds, split.gallery);
  const auto kind = cfg.attack.kind == "gaussian" ? attack::AttackKind::gaussian : attack::AttackKind::transfer_pgd;
  const auto report = attack::transfer_evaluate(target, surrogate, queries, gallery, cfg.attack.cfg, kind,
                                                cfg.eval.distance, cfg.eval_options());
  const auto path = csv.value_or(cfg.out_dir() / "attack.csv");
  write_file_text(path, attack::attack_csv(cfg.method_name(), report));
  return path;
}

struct SweepRow {
  std::string value;
  std::uint64_t seed = 0;
  metrics::EvalReport report;
};

inline constexpr const char* kSweepHeader = "parameter,value,seed,rank1,map";
inline constexpr const char* kSweepSummaryHeader = "parameter,value,median_rank1,median_map,best";

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct SweepOutputs {
  fs::path rows;
  fs::path summary;
  std::optional<fs::path> plot;
  std::string best_value;
  std::vector<SweepRow> results;
};

/// Trains and evaluates one cell per (value, seed). Seeds run from
/// run.seed to run.seed + sweep.seeds - 1.
inline SweepOutputs cmd_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.sweep.param.empty() || !is_known_key(cfg.sweep.param))
    throw ConfigError("sweep.param '" + cfg.sweep.param + "' does not name a config key");
  if (cfg.sweep.values.empty()) throw ConfigError("sweep.values must not be empty");
  std::vector<ExperimentConfig> cells;
  for (const auto& v : cfg.sweep.values) {
    auto c = cfg;
    set_value(c, cfg.sweep.param, v);
    c.validate();
    cells.push_back(std::move(c));
  }
  const auto ds = load_experiment_dataset(cfg);
  const auto split = data::make_split(ds, cfg.data.train_ids);
  OutputLock lock(cfg.out_dir());
  SweepOutputs out;
  out.rows = cfg.out_dir() / "sweep.csv";
  out.summary = cfg.out_dir() / "sweep_summary.csv";
  std::string csv = std::string(kSweepHeader) + "\n";
  std::vector<double> med_map, med_r1;
  for (std::size_t vi = 0; vi < cells.size(); ++vi) {
    std::vector<double> maps, r1s;
    for (std::size_t s = 0; s < cfg.sweep.seeds; ++s) {
      const std::uint64_t seed = cfg.run.seed + s;
      auto trained = train_model(cells[vi], ds, split, seed);
      const auto rep = evaluate_model(trained.model, ds, split, cells[vi]);
      out.results.push_back({cfg.sweep.values[vi], seed, rep});
      csv += cfg.sweep.param + "," + cfg.sweep.values[vi] + "," + std::to_string(seed) + "," + fixed4(rep.rank1) +
             "," + fixed4(rep.map) + "\n";
      maps.push_back(rep.map);
      r1s.push_back(rep.rank1);
    }
    med_map.push_back(median(maps));
    med_r1.push_back(median(r1s));
  }
  const std::size_t best = static_cast<std::size_t>(std::max_element(med_map.begin(), med_map.end()) - med_map.begin());
  out.best_value = cfg.sweep.values[best];
  std::string summary = std::string(kSweepSummaryHeader) + "\n";
  for (std::size_t vi = 0; vi < cells.size(); ++vi)
    summary += cfg.sweep.param + "," + cfg.sweep.values[vi] + "," + fixed4(med_r1[vi]) + "," + fixed4(med_map[vi]) +
               "," + (vi == best ? "1" : "0") + "\n";
  write_file_text(out.rows, csv);
  write_file_text(out.summary, summary);
  if (cfg.sweep.plot) {
    out.plot = cfg.out_dir() / "sweep_map.pgm";
    write_pnm(*out.plot, render_line_plot(med_map));
  }
  return out;
}

/// One train + eval per method label, one eval CSV row each.
inline fs::path cmd_compare(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.compare.methods.empty()) throw ConfigError("compare.methods must not be empty");
  std::vector<ExperimentConfig> cells;
  for (const auto& m : cfg.compare.methods) {
    auto c = with_method(cfg, m);
    c.validate();
    cells.push_back(std::move(c));
  }
  const auto ds = load_experiment_dataset(cfg);
  const auto split = data::make_split(ds, cfg.data.train_ids);
  OutputLock lock(cfg.out_dir());
  std::string csv = std::string(metrics::kEvalCsvHeader) + "\n";
  for (const auto& c : cells) {
    auto trained = train_model(c, ds, split, cfg.run.seed);
    csv += metrics::eval_csv_row(c.method_name(), evaluate_model(trained.model, ds, split, c)) + "\n";
  }
  const auto path = cfg.out_dir() / "compare.csv";
  write_file_text(path, csv);
  return path;
}

/// Min-max normalized 8-bit rendering of one channel plane.
inline Image8 plane_to_pgm(std::span<const float> plane, std::size_t height, std::size_t width) {
  Image8 img{width, height, 1, std::vector<std::uint8_t>(plane.size())};
  const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
  const double range = static_cast<double>(*hi) - *lo;
  for (std::size_t i = 0; i < plane.size(); ++i)
    img.data[i] = range > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * (plane[i] - *lo) / range)) : 0;
  return img;
}

struct VizOutputs {
  std::vector<fs::path> images;
  fs::path log;
  MaskDecision decision;
};

/// Stem feature maps of dataset sample `index` before and after masking,
/// one PGM per channel and phase, plus the decision log. Masking draws from
/// RngStream(run.seed, "viz") and uses the [lfm] settings regardless of lfm.enabled.
inline VizOutputs cmd_viz_masks(const ExperimentConfig& cfg, const fs::path& checkpoint, std::size_t index) {
  cfg.validate();
  const auto ds = load_experiment_dataset(cfg);
  if (index >= ds.size())
    throw InputError("sample index " + std::to_string(index) + " outside [0, " + std::to_string(ds.size()) + ")");
  const auto split = data::make_split(ds, cfg.data.train_ids);
  auto model = load_model(cfg, split, checkpoint);
  OutputLock lock(cfg.out_dir());
  const std::size_t idx[1] = {index};
  const auto before = model.stem_features(data::load_images<float>(ds, idx));
  auto after = before;
  const auto decisions = lfm_apply_inplace(after, cfg.lfm_config(), RngStream(cfg.run.seed, "viz"), true);
  const auto dir = cfg.out_dir() / "viz";
  fs::create_directories(dir);
  VizOutputs out;
  char name[64];
  for (std::size_t c = 0; c < before.channels(); ++c) {
    std::snprintf(name, sizeof name, "stem_c%02zu_before.pgm", c);
    out.images.push_back(dir / name);
    write_pnm(out.images.back(), plane_to_pgm(before.channel(0, c), before.height(), before.width()));
    std::snprintf(name, sizeof name, "stem_c%02zu_after.pgm", c);
    out.images.push_back(dir / name);
    write_pnm(out.images.back(), plane_to_pgm(after.channel(0, c), after.height(), after.width()));
  }
  out.log = dir / "masks.log";
  auto d = decisions.front();
  d.sample_id = index;
  write_file_text(out.log, format_decision(d) + "\n");
  out.decision = d;
  return out;
}

}  // namespace lfm::experiment
