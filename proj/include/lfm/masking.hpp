#pragma once

// Local feature masking and the baseline regularizers it is compared with:
// element dropout, channel (spatial) dropout and input-space cutout.
//
// Every operation draws from an RngStream and, per sample b, from the forked
// substream rng.fork(b), so batch results equal sample-by-sample results.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lfm/errors.hpp"
#include "lfm/feature_block.hpp"
#include "lfm/rng.hpp"

namespace lfm {

/// Hyperparameters of local feature masking.
struct LfmConfig {
  double probability = 0.15;          // per-sample gate p
  std::size_t num_masked_channels = 0;  // N
  double area_low = 0.03;             // S_l
  double area_high = 0.4;             // S_h
  double aspect_low = 0.3;            // r_1
  double aspect_high = 1.0 / 0.3;     // r_2
  int max_attempts = 100;

  /// Base settings for a map with `channels` channels (N = C/2).
  static LfmConfig defaults_for(std::size_t channels) {
    LfmConfig cfg;
    cfg.num_masked_channels = channels / 2;
    return cfg;
  }

  void validate() const {
    if (!(probability >= 0.0 && probability <= 1.0))
      throw ConfigError("lfm probability must lie in [0, 1]");
    if (!(area_low > 0.0 && area_low <= area_high && area_high < 1.0))
      throw ConfigError("lfm area range must satisfy 0 < area_low <= area_high < 1");
    if (!(aspect_low > 0.0 && aspect_low <= aspect_high && std::isfinite(aspect_high)))
      throw ConfigError("lfm aspect range must satisfy 0 < aspect_low <= aspect_high");
    if (max_attempts < 1) throw ConfigError("lfm max_attempts must be positive");
  }

  void validate_for(std::size_t channels) const {
    validate();
    if (num_masked_channels > channels)
      throw ConfigError("lfm num_masked_channels (" + std::to_string(num_masked_channels) +
                        ") exceeds channel count (" + std::to_string(channels) + ")");
  }
};

/// One accepted masking rectangle on a single channel.
struct MaskRect {
  int x0 = 0;
  int y0 = 0;
  int w_px = 1;
  int h_px = 1;
  double fill = 0.0;
  double area_fraction = 0.0;  // drawn S_e / S before rounding

  bool contains(int x, int y) const noexcept {
    return x >= x0 && x < x0 + w_px && y >= y0 && y < y0 + h_px;
  }
  friend bool operator==(const MaskRect&, const MaskRect&) = default;
};

struct ChannelMask {
  int channel = 0;
  std::optional<MaskRect> rect;  // empty when every attempt was rejected
  friend bool operator==(const ChannelMask&, const ChannelMask&) = default;
};

/// Everything one sample consumed from its stream: gate draw, channel set,
/// and a rectangle + fill per selected channel.
struct MaskDecision {
  std::size_t sample_id = 0;
  double gate_draw = std::numeric_limits<double>::quiet_NaN();  // NaN: gate not drawn (eval)
  bool applied = false;
  std::vector<int> channels;
  std::vector<ChannelMask> rects;

  friend bool operator==(const MaskDecision& a, const MaskDecision& b) {
    const bool gates_equal = (std::isnan(a.gate_draw) && std::isnan(b.gate_draw)) ||
                             a.gate_draw == b.gate_draw;
    return a.sample_id == b.sample_id && gates_equal && a.applied == b.applied &&
           a.channels == b.channels && a.rects == b.rects;
  }
};

/// Rejection-samples a rectangle of area fraction in [S_l, S_h) and aspect
/// ratio in [r_1, r_2) that fits inside an H x W map.
///
/// Draw order per attempt: area, aspect, x, y. Accepted real sides are
/// floored (minimum 1). Returns nullopt after cfg.max_attempts rejections.
inline std::optional<MaskRect> sample_mask_rect(RngStream& rng, std::size_t height,
                                                std::size_t width, const LfmConfig& cfg) {
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  const double area = h * w;
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const double fraction = rng.uniform_real(cfg.area_low, cfg.area_high);
    const double target_area = fraction * area;
    const double aspect = rng.uniform_real(cfg.aspect_low, cfg.aspect_high);
    const double rect_h = std::sqrt(target_area * aspect);
    const double rect_w = std::sqrt(target_area / aspect);
    const auto x = rng.uniform_int(width);
    const auto y = rng.uniform_int(height);
    if (static_cast<double>(x) + rect_w <= w && static_cast<double>(y) + rect_h <= h) {
      MaskRect r;
      r.x0 = static_cast<int>(x);
      r.y0 = static_cast<int>(y);
      r.w_px = std::max(1, static_cast<int>(std::floor(rect_w)));
      r.h_px = std::max(1, static_cast<int>(std::floor(rect_h)));
      r.area_fraction = fraction;
      return r;
    }
  }
  return std::nullopt;
}

/// N distinct channel indices drawn uniformly without replacement from
/// [0, C), in draw order (partial Fisher-Yates).
inline std::vector<int> select_channels(RngStream& rng, std::size_t channels, std::size_t count) {
  if (count > channels)
    throw ConfigError("cannot select " + std::to_string(count) + " of " +
                      std::to_string(channels) + " channels");
  std::vector<int> pool(channels);
  for (std::size_t i = 0; i < channels; ++i) pool[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_int(channels - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

template <typename T>
void fill_rect(std::span<T> plane, std::size_t width, const MaskRect& r, T value) {
  for (int y = r.y0; y < r.y0 + r.h_px; ++y) {
    T* row = plane.data() + static_cast<std::size_t>(y) * width;
    std::fill(row + r.x0, row + r.x0 + r.w_px, value);
  }
}

/// Draws the full decision for one sample without touching any data.
inline MaskDecision draw_mask_decision(RngStream& rng, std::size_t sample_id, std::size_t channels,
                                       std::size_t height, std::size_t width,
                                       const LfmConfig& cfg) {
  MaskDecision d;
  d.sample_id = sample_id;
  d.gate_draw = rng.uniform01();
  d.applied = d.gate_draw < cfg.probability;
  if (!d.applied) return d;
  d.channels = select_channels(rng, channels, cfg.num_masked_channels);
  d.rects.reserve(d.channels.size());
  for (int c : d.channels) {
    const double fill = rng.uniform01();
    auto rect = sample_mask_rect(rng, height, width, cfg);
    if (rect) rect->fill = fill;
    d.rects.push_back({c, rect});
  }
  return d;
}

/// Writes the recorded rectangles of `decisions` into `block`.
template <typename T>
void lfm_replay(FeatureBlock<T>& block, std::span<const MaskDecision> decisions) {
  for (const auto& d : decisions) {
    if (!d.applied) continue;
    if (d.sample_id >= block.batch()) throw StructuralError("mask decision sample out of range");
    for (const auto& cm : d.rects) {
      if (!cm.rect) continue;
      const auto& r = *cm.rect;
      if (cm.channel < 0 || static_cast<std::size_t>(cm.channel) >= block.channels() || r.x0 < 0 ||
          r.y0 < 0 || static_cast<std::size_t>(r.x0 + r.w_px) > block.width() ||
          static_cast<std::size_t>(r.y0 + r.h_px) > block.height())
        throw StructuralError("mask decision does not fit block " + block.shape_string());
      fill_rect(block.channel(d.sample_id, static_cast<std::size_t>(cm.channel)), block.width(), r,
                static_cast<T>(r.fill));
    }
  }
}

/// Zeroes the gradient at every masked position: there the forward output
/// is a constant that does not depend on the input.
template <typename T>
void lfm_backward(FeatureBlock<T>& grad, std::span<const MaskDecision> decisions) {
  for (const auto& d : decisions) {
    if (!d.applied) continue;
    for (const auto& cm : d.rects) {
      if (cm.rect)
        fill_rect(grad.channel(d.sample_id, static_cast<std::size_t>(cm.channel)), grad.width(),
                  *cm.rect, T{0});
    }
  }
}

/// In-place local feature masking. Sample b uses rng.fork(b).
template <typename T>
std::vector<MaskDecision> lfm_apply_inplace(FeatureBlock<T>& block, const LfmConfig& cfg,
                                            const RngStream& rng, bool training) {
  cfg.validate_for(block.channels());
  std::vector<MaskDecision> decisions(block.batch());
  for (std::size_t b = 0; b < block.batch(); ++b) {
    if (!training) {
      decisions[b].sample_id = b;
      continue;
    }
    auto stream = rng.fork(b);
    decisions[b] =
        draw_mask_decision(stream, b, block.channels(), block.height(), block.width(), cfg);
  }
  if (training) lfm_replay(block, std::span<const MaskDecision>(decisions));
  return decisions;
}

template <typename T>
struct LfmResult {
  FeatureBlock<T> block;
  std::vector<MaskDecision> decisions;
};

template <typename T>
LfmResult<T> lfm_apply(FeatureBlock<T> block, const LfmConfig& cfg, const RngStream& rng,
                       bool training) {
  auto decisions = lfm_apply_inplace(block, cfg, rng, training);
  return {std::move(block), std::move(decisions)};
}

// ---------------------------------------------------------------------------
// Baselines

/// Clipped square region [y0, y1) x [x0, x1).
struct CutoutRegion {
  int y0 = 0, y1 = 0, x0 = 0, x1 = 0;
  int area() const noexcept { return (y1 - y0) * (x1 - x0); }
};

inline CutoutRegion cutout_region(RngStream& rng, std::size_t height, std::size_t width, int side) {
  const int cy = static_cast<int>(rng.uniform_int(height));
  const int cx = static_cast<int>(rng.uniform_int(width));
  CutoutRegion r;
  r.y0 = std::max(0, cy - side / 2);
  r.x0 = std::max(0, cx - side / 2);
  r.y1 = std::min(static_cast<int>(height), cy - side / 2 + side);
  r.x1 = std::min(static_cast<int>(width), cx - side / 2 + side);
  return r;
}

inline void validate_cutout(std::size_t height, std::size_t width, int side) {
  if (side < 1) throw ConfigError("cutout side must be >= 1");
  if (static_cast<std::size_t>(side) > 2 * std::min(height, width))
    throw ConfigError("cutout side exceeds twice the smaller image side");
}

/// One square per sample, centred on a uniform pixel and clipped, written
/// identically into all channels.
template <typename T>
void cutout_apply_inplace(FeatureBlock<T>& images, int side, T fill, const RngStream& rng,
                          bool training) {
  validate_cutout(images.height(), images.width(), side);
  if (!training) return;
  for (std::size_t b = 0; b < images.batch(); ++b) {
    auto stream = rng.fork(b);
    const auto r = cutout_region(stream, images.height(), images.width(), side);
    for (std::size_t c = 0; c < images.channels(); ++c)
      for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) images(b, c, y, x) = fill;
  }
}

template <typename T>
FeatureBlock<T> cutout_apply(FeatureBlock<T> images, int side, T fill, const RngStream& rng,
                             bool training) {
  cutout_apply_inplace(images, side, fill, rng, training);
  return images;
}

inline void validate_drop_rate(double q) {
  if (!(q >= 0.0 && q < 1.0)) throw ConfigError("drop rate must lie in [0, 1)");
}

/// Per-(sample, channel) multipliers: 0 for dropped channels, 1/(1-q) otherwise.
template <typename T>
std::vector<T> channel_dropout_mask(std::size_t batch, std::size_t channels, double q,
                                    const RngStream& rng) {
  validate_drop_rate(q);
  std::vector<T> scale(batch * channels);
  const T keep = static_cast<T>(1.0 / (1.0 - q));
  for (std::size_t b = 0; b < batch; ++b) {
    auto stream = rng.fork(b);
    for (std::size_t c = 0; c < channels; ++c)
      scale[b * channels + c] = stream.uniform01() < q ? T{0} : keep;
  }
  return scale;
}

template <typename T>
FeatureBlock<T> channel_dropout_apply(FeatureBlock<T> block, double q, const RngStream& rng,
                                      bool training) {
  validate_drop_rate(q);
  if (!training || q == 0.0) return block;
  const auto scale = channel_dropout_mask<T>(block.batch(), block.channels(), q, rng);
  for (std::size_t b = 0; b < block.batch(); ++b)
    for (std::size_t c = 0; c < block.channels(); ++c)
      for (T& v : block.channel(b, c)) v *= scale[b * block.channels() + c];
  return block;
}

/// Per-element inverted-dropout multipliers.
template <typename T>
std::vector<T> element_dropout_mask(std::size_t n, double q, const RngStream& rng) {
  validate_drop_rate(q);
  auto stream = rng;
  std::vector<T> scale(n);
  const T keep = static_cast<T>(1.0 / (1.0 - q));
  for (auto& s : scale) s = stream.uniform01() < q ? T{0} : keep;
  return scale;
}

template <typename T>
std::vector<T> element_dropout_apply(std::vector<T> values, double q, const RngStream& rng,
                                     bool training) {
  validate_drop_rate(q);
  if (!training || q == 0.0) return values;
  const auto scale = element_dropout_mask<T>(values.size(), q, rng);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] *= scale[i];
  return values;
}

// ---------------------------------------------------------------------------
// Decision log: one line per sample,
//   sample_id applied p1 channels=[c1,c2,...] rects=[(c,x0,y0,w,h,fill),...]
// with absent rectangles written as (c,none).

namespace detail {
inline std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace detail

inline std::string format_decision(const MaskDecision& d) {
  std::string s = std::to_string(d.sample_id) + ' ' + (d.applied ? '1' : '0') + ' ' +
                  detail::fmt9(d.gate_draw) + " channels=[";
  for (std::size_t i = 0; i < d.channels.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(d.channels[i]);
  }
  s += "] rects=[";
  for (std::size_t i = 0; i < d.rects.size(); ++i) {
    if (i) s += ',';
    const auto& cm = d.rects[i];
    s += '(' + std::to_string(cm.channel);
    if (cm.rect) {
      const auto& r = *cm.rect;
      s += ',' + std::to_string(r.x0) + ',' + std::to_string(r.y0) + ',' + std::to_string(r.w_px) +
           ',' + std::to_string(r.h_px) + ',' + detail::fmt9(static_cast<float>(r.fill));
    } else {
      s += ",none";
    }
    s += ')';
  }
  s += ']';
  return s;
}

inline std::string format_decision_log(std::span<const MaskDecision> decisions) {
  std::string out;
  for (const auto& d : decisions) out += format_decision(d) + '\n';
  return out;
}

/// Parses one log line. Fills round-trip exactly through float; area
/// fractions are not logged and come back as 0.
inline MaskDecision parse_decision(std::string_view line) {
  auto fail = [&](const char* what) -> MaskDecision {
    throw FormatError(std::string("bad mask decision line: ") + what, 0);
  };
  MaskDecision d;
  std::istringstream in{std::string(line)};
  std::string applied, gate, channels, rects;
  if (!(in >> d.sample_id >> applied >> gate >> channels >> rects)) return fail("missing fields");
  d.applied = applied == "1";
  d.gate_draw = std::strtod(gate.c_str(), nullptr);
  if (channels.rfind("channels=[", 0) != 0 || channels.back() != ']') return fail("channels");
  std::string_view cl(channels);
  cl = cl.substr(10, cl.size() - 11);
  while (!cl.empty()) {
    const auto comma = cl.find(',');
    int v = 0;
    std::from_chars(cl.data(), cl.data() + std::min(comma, cl.size()), v);
    d.channels.push_back(v);
    cl = comma == std::string_view::npos ? std::string_view{} : cl.substr(comma + 1);
  }
  if (rects.rfind("rects=[", 0) != 0 || rects.back() != ']') return fail("rects");
  std::string_view rl(rects);
  rl = rl.substr(7, rl.size() - 8);
  while (!rl.empty()) {
    if (rl.front() == ',') rl.remove_prefix(1);
    if (rl.front() != '(') return fail("rect tuple");
    const auto close = rl.find(')');
    if (close == std::string_view::npos) return fail("unterminated rect tuple");
    const std::string body(rl.substr(1, close - 1));
    rl.remove_prefix(close + 1);
    ChannelMask cm;
    if (body.find("none") != std::string::npos) {
      if (std::sscanf(body.c_str(), "%d", &cm.channel) != 1) return fail("rect channel");
    } else {
      MaskRect r;
      if (std::sscanf(body.c_str(), "%d,%d,%d,%d,%d,%lf", &cm.channel, &r.x0, &r.y0, &r.w_px,
                      &r.h_px, &r.fill) != 6)
        return fail("rect fields");
      cm.rect = r;
    }
    d.rects.push_back(cm);
  }
  return d;
}

}  // namespace lfm
