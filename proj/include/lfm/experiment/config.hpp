#pragma once

// Sectioned key-value experiment configuration:
//
//   # comment
//   [section]
//   key = value
//
// Every key is known ahead of time; anything else is a ConfigError.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lfm/attack.hpp"
#include "lfm/data/batches.hpp"
#include "lfm/data/synth.hpp"
#include "lfm/errors.hpp"
#include "lfm/masking.hpp"
#include "lfm/metrics.hpp"
#include "lfm/nn/model.hpp"
#include "lfm/nn/optim.hpp"

namespace lfm::experiment {

struct DataSection {
  data::SynthSpec synth;
  std::size_t train_ids = 50;
  std::string path;  // empty: <out>/dataset.lfmd
};

struct ModelSection {
  std::size_t stem_channels = 16;
  std::array<std::size_t, 3> stage_widths{16, 32, 64};
  std::size_t blocks_per_stage = 2;
};

struct LfmSection {
  bool enabled = false;
  LfmConfig cfg;
  std::optional<std::size_t> num_masked_channels;  // unset: half the stem channels
};

struct TrainSection {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t lr_step = 20;
  double lr_gamma = 0.1;
  double label_smoothing = 0.0;
  bool flip = true;
  bool pad_crop = false;
  bool cutout = false;
  int cutout_side = 16;
  double cutout_fill = 0.0;
  bool dropout = false;
  double dropout_rate = 0.5;
  bool spatial_dropout = false;
  double spatial_dropout_rate = 0.1;
};

struct EvalSection {
  metrics::DistanceKind distance = metrics::DistanceKind::euclidean;
  std::vector<std::size_t> ks{1, 5, 10};
  bool exclude_same_camera = true;
  std::string query_set = "query";  // "query" or "gallery" (self-retrieval)
};

struct AttackSection {
  attack::AttackConfig cfg;
  std::string kind = "pgd";  // "pgd" or "gaussian"
};

struct RunSection {
  std::uint64_t seed = 1;
  std::string out = "out";
};

struct SweepSection {
  std::string param;
  std::vector<std::string> values;
  std::size_t seeds = 1;
  bool plot = false;
};

struct CompareSection {
  std::vector<std::string> methods{"baseline", "dropout", "lfm", "lfm+dropout"};
};

struct ExperimentConfig {
  DataSection data;
  ModelSection model;
  LfmSection lfm;
  TrainSection train;
  AttackSection attack;
  EvalSection eval;
  RunSection run;
  SweepSection sweep;
  CompareSection compare;

  std::size_t masked_channels() const {
    return lfm.num_masked_channels.value_or(model.stem_channels / 2);
  }

  LfmConfig lfm_config() const {
    LfmConfig c = lfm.cfg;
    c.num_masked_channels = masked_channels();
    return c;
  }

  nn::MiniResNetConfig model_config(std::size_t num_classes) const {
    nn::MiniResNetConfig m;
    m.stem_channels = model.stem_channels;
    m.stage_widths = model.stage_widths;
    m.blocks_per_stage = model.blocks_per_stage;
    m.num_classes = num_classes;
    m.lfm_enabled = lfm.enabled;
    m.lfm = lfm_config();
    m.label_smoothing = train.label_smoothing;
    m.dropout = train.dropout ? train.dropout_rate : 0.0;
    m.spatial_dropout = train.spatial_dropout ? train.spatial_dropout_rate : 0.0;
    return m;
  }

  data::AugmentFlags augment() const {
    data::AugmentFlags a;
    a.flip = train.flip;
    a.pad_crop = train.pad_crop;
    a.cutout_side = train.cutout ? train.cutout_side : 0;
    a.cutout_fill = train.cutout_fill;
    return a;
  }

  metrics::EvalOptions eval_options() const {
    metrics::EvalOptions o;
    o.ks = eval.ks;
    o.exclude_same_camera = eval.exclude_same_camera;
    return o;
  }

  nn::LrSchedule schedule() const { return {train.lr, train.lr_step, train.lr_gamma}; }

  std::filesystem::path out_dir() const { return run.out; }
  std::filesystem::path dataset_path() const {
    return data.path.empty() ? out_dir() / "dataset.lfmd" : std::filesystem::path(data.path);
  }

  /// Method label built from the regularizer toggles, e.g. "lfm+cutout+dropout".
  std::string method_name() const {
    std::string s;
    auto add = [&](const char* n) { s += (s.empty() ? "" : "+") + std::string(n); };
    if (lfm.enabled) add("lfm");
    if (train.cutout) add("cutout");
    if (train.dropout) add("dropout");
    if (train.spatial_dropout) add("spatial_dropout");
    return s.empty() ? "baseline" : s;
  }

  /// Checks every invariant; call before touching the filesystem.
  void validate() const {
    data.synth.validate();
    if (data.train_ids == 0 || data.train_ids >= data.synth.n_identities)
      throw ConfigError("data.train_ids must lie in [1, n_identities)");
    model_config(data.train_ids).validate();
    lfm_config().validate_for(model.stem_channels);
    if (train.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (!(train.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
    if (!(train.momentum >= 0.0 && train.momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
    if (!(train.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
    if (train.cutout) validate_cutout(data::kImageHeight, data::kImageWidth, train.cutout_side);
    if (!(train.cutout_fill >= 0.0 && train.cutout_fill <= 1.0))
      throw ConfigError("train.cutout_fill must lie in [0, 1]");
    validate_drop_rate(train.dropout_rate);
    validate_drop_rate(train.spatial_dropout_rate);
    attack.cfg.validate();
    if (attack.kind != "pgd" && attack.kind != "gaussian") throw ConfigError("attack.kind must be pgd or gaussian");
    if (eval.ks.empty()) throw ConfigError("eval.ks must not be empty");
    for (auto k : eval.ks)
      if (k == 0) throw ConfigError("eval.ks entries must be >= 1");
    if (eval.query_set != "query" && eval.query_set != "gallery")
      throw ConfigError("eval.query_set must be query or gallery");
    if (run.out.empty()) throw ConfigError("run.out must not be empty");
    if (sweep.seeds == 0) throw ConfigError("sweep.seeds must be >= 1");
  }
};

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split_list(const std::string& v, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string where(const std::string& key) { return "config key '" + key + "'"; }

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(where(key) + ": '" + v + "' is not a number");
  }
  if (used != v.size()) throw ConfigError(where(key) + ": '" + v + "' is not a number");
  return d;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); }))
    throw ConfigError(where(key) + ": '" + v + "' is not a non-negative integer");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(where(key) + ": '" + v + "' is out of range");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(where(key) + ": '" + v + "' is not a boolean");
}

}  // namespace detail

/// Sets `section.key` from its textual value. Unknown keys throw.
inline void set_value(ExperimentConfig& c, const std::string& path, const std::string& raw) {
  using namespace detail;
  const std::string v = trim(raw);
  auto D = [&] { return to_double(path, v); };
  auto U = [&] { return to_uint(path, v); };
  auto B = [&] { return to_bool(path, v); };
  auto Z = [&] { return static_cast<std::size_t>(U()); };
  // clang-format off
  if (path == "data.seed") c.data.synth.seed = U();
  else if (path == "data.n_identities") c.data.synth.n_identities = Z();
  else if (path == "data.views") c.data.synth.views_per_id = Z();
  else if (path == "data.cams") c.data.synth.n_cams = Z();
  else if (path == "data.train_ids") c.data.train_ids = Z();
  else if (path == "data.path") c.data.path = v;
  else if (path == "model.stem_channels") c.model.stem_channels = Z();
  else if (path == "model.blocks_per_stage") c.model.blocks_per_stage = Z();
  else if (path == "model.stage_widths") {
    const auto parts = split_list(v);
    if (parts.size() != 3) throw ConfigError(where(path) + ": expected three comma-separated widths");
    for (std::size_t i = 0; i < 3; ++i) c.model.stage_widths[i] = static_cast<std::size_t>(to_uint(path, parts[i]));
  }
  else if (path == "lfm.enabled") c.lfm.enabled = B();
  else if (path == "lfm.probability") c.lfm.cfg.probability = D();
  else if (path == "lfm.num_masked_channels") {
    if (v == "auto") c.lfm.num_masked_channels.reset(); else c.lfm.num_masked_channels = Z();
  }
  else if (path == "lfm.area_low") c.lfm.cfg.area_low = D();
  else if (path == "lfm.area_high") c.lfm.cfg.area_high = D();
  else if (path == "lfm.aspect_low") c.lfm.cfg.aspect_low = D();
  else if (path == "lfm.aspect_high") c.lfm.cfg.aspect_high = D();
  else if (path == "lfm.max_attempts") c.lfm.cfg.max_attempts = static_cast<int>(U());
  else if (path == "train.epochs") c.train.epochs = Z();
  else if (path == "train.batch_size") c.train.batch_size = Z();
  else if (path == "train.lr") c.train.lr = D();
  else if (path == "train.momentum") c.train.momentum = D();
  else if (path == "train.weight_decay") c.train.weight_decay = D();
  else if (path == "train.lr_step") c.train.lr_step = Z();
  else if (path == "train.lr_gamma") c.train.lr_gamma = D();
  else if (path == "train.label_smoothing") c.train.label_smoothing = D();
  else if (path == "train.flip") c.train.flip = B();
  else if (path == "train.pad_crop") c.train.pad_crop = B();
  else if (path == "train.cutout") c.train.cutout = B();
  else if (path == "train.cutout_side") c.train.cutout_side = static_cast<int>(U());
  else if (path == "train.cutout_fill") c.train.cutout_fill = D();
  else if (path == "train.dropout") c.train.dropout = B();
  else if (path == "train.dropout_rate") c.train.dropout_rate = D();
  else if (path == "train.spatial_dropout") c.train.spatial_dropout = B();
  else if (path == "train.spatial_dropout_rate") c.train.spatial_dropout_rate = D();
  else if (path == "attack.epsilon") c.attack.cfg.epsilon = D();
  else if (path == "attack.step_size") c.attack.cfg.step_size = D();
  else if (path == "attack.steps") c.attack.cfg.steps = static_cast<int>(U());
  else if (path == "attack.random_start") c.attack.cfg.random_start = B();
  else if (path == "attack.noise_sigma") c.attack.cfg.noise_sigma = D();
  else if (path == "attack.seed") c.attack.cfg.seed = U();
  else if (path == "attack.kind") c.attack.kind = v;
  else if (path == "eval.distance") c.eval.distance = metrics::parse_distance(v);
  else if (path == "eval.ks") {
    c.eval.ks.clear();
    for (const auto& k : split_list(v)) c.eval.ks.push_back(static_cast<std::size_t>(to_uint(path, k)));
  }
  else if (path == "eval.exclude_same_camera") c.eval.exclude_same_camera = B();
  else if (path == "eval.query_set") c.eval.query_set = v;
  else if (path == "run.seed") c.run.seed = U();
  else if (path == "run.out") c.run.out = v;
  else if (path == "sweep.param") c.sweep.param = v;
  else if (path == "sweep.values") c.sweep.values = split_list(v);
  else if (path == "sweep.seeds") c.sweep.seeds = Z();
  else if (path == "sweep.plot") c.sweep.plot = B();
  else if (path == "compare.methods") c.compare.methods = split_list(v);
  else throw ConfigError("unknown " + where(path));
  // clang-format on
}

/// True when `path` names a settable key.
inline bool is_known_key(const std::string& path) {
  ExperimentConfig probe;
  try {
    set_value(probe, path, "1");
  } catch (const ConfigError& e) {
    return std::string(e.what()).rfind("unknown ", 0) != 0;
  }
  return true;
}

/// Parses config text onto `base`. Errors name the line.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string at = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(at + "unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(at + "expected key = value");
    if (section.empty()) throw ConfigError(at + "key outside of any [section]");
    const auto key = detail::trim(line.substr(0, eq));
    try {
      set_value(base, section + "." + key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(at + e.what());
    }
  }
  return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

/// Applies a method label such as "lfm+cutout" on top of `base` with all
/// regularizers switched off first.
inline ExperimentConfig with_method(ExperimentConfig base, const std::string& method) {
  base.lfm.enabled = false;
  base.train.cutout = false;
  base.train.dropout = false;
  base.train.spatial_dropout = false;
  for (const auto& part : detail::split_list(method, '+')) {
    if (part == "baseline") continue;
    if (part == "lfm") base.lfm.enabled = true;
    else if (part == "cutout") base.train.cutout = true;
    else if (part == "dropout") base.train.dropout = true;
    else if (part == "spatial_dropout") base.train.spatial_dropout = true;
    else throw ConfigError("unknown method component '" + part + "'");
  }
  return base;
}

}  // namespace lfm::experiment
