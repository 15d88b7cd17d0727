#pragma once

// Deterministic synthetic person re-identification data: each identity is a
// two-tone humanoid sprite (head, torso, legs) rendered over a textured,
// camera-tinted background with per-view photometric and geometric jitter.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "lfm/data/dataset.hpp"
#include "lfm/errors.hpp"
#include "lfm/rng.hpp"

namespace lfm::data {

struct SynthSpec {
  std::uint64_t seed = 7;
  std::size_t n_identities = 75;
  std::size_t views_per_id = 8;
  std::size_t n_cams = 4;

  void validate() const {
    if (n_identities < 2) throw ConfigError("n_identities must be >= 2");
    if (views_per_id < 2) throw ConfigError("views_per_id must be >= 2");
    if (n_cams < 2) throw ConfigError("n_cams must be >= 2");
    if (n_cams > 65535 || n_identities > 0xffffffffULL)
      throw ConfigError("identity or camera count exceeds the dataset format");
  }
};

/// Appearance parameters; a pure function of (dataset seed, id).
struct Identity {
  std::uint32_t id = 0;
  double torso_hue = 0.0;    // [0, 1)
  double leg_hue = 0.0;      // [0, 1)
  double head_radius = 4.0;  // pixels, [3, 5)
  double body_width = 0.5;   // fraction of image width, [0.35, 0.6)
  double body_height = 0.85; // fraction of image height, [0.75, 0.95)
};

inline Identity make_identity(std::uint64_t seed, std::uint32_t id) {
  RngStream rng(seed, "identity", 0, id);
  Identity p;
  p.id = id;
  p.torso_hue = rng.uniform01();
  p.leg_hue = rng.uniform01();
  p.head_radius = rng.uniform_real(3.0, 5.0);
  p.body_width = rng.uniform_real(0.35, 0.6);
  p.body_height = rng.uniform_real(0.75, 0.95);
  return p;
}

namespace detail {

using Rgb = std::array<double, 3>;

inline Rgb hsv(double h, double s, double v) {
  h = (h - std::floor(h)) * 6.0;
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

}  // namespace detail

/// Renders one view. Draw order is fixed so datasets are byte-reproducible.
inline Sample render_view(std::uint64_t seed, const Identity& who, std::size_t view,
                          std::size_t n_cams) {
  using detail::Rgb;
  constexpr int H = kImageHeight, W = kImageWidth;
  RngStream rng(seed, "view", who.id, view);
  const double brightness = rng.uniform_real(0.7, 1.3);
  const int dx = static_cast<int>(rng.uniform_int(7)) - 3;
  const int dy = static_cast<int>(rng.uniform_int(7)) - 3;
  const bool flip = rng.bernoulli(0.5);
  const bool occlude = rng.bernoulli(0.2);
  const int bar_y = 10 + static_cast<int>(rng.uniform_int(40));
  const int bar_h = 4 + static_cast<int>(rng.uniform_int(5));
  const double bar_gray = rng.uniform_real(0.2, 0.8);
  const double tex_fx = rng.uniform_real(0.2, 0.9);
  const double tex_fy = rng.uniform_real(0.2, 0.9);
  const double tex_phase = rng.uniform_real(0.0, 6.283185307179586);

  const auto camera = static_cast<std::uint16_t>(view % n_cams);
  const Rgb background = detail::hsv(static_cast<double>(camera) / static_cast<double>(n_cams), 0.25, 0.55);
  const Rgb torso = detail::hsv(who.torso_hue, 0.75, 0.85);
  const Rgb legs = detail::hsv(who.leg_hue, 0.75, 0.85);
  const Rgb skin{0.9, 0.75, 0.6};

  const double cx = W / 2.0 + dx;
  const double top = 4.0 + dy;
  const double figure_h = who.body_height * (H - 8);
  const double r = who.head_radius;
  const double torso_top = top + 2.0 * r;
  const double torso_bottom = torso_top + 0.45 * (figure_h - 2.0 * r);
  const double feet = top + figure_h;
  const double half_torso = who.body_width * W / 2.0;
  const double leg_w = half_torso * 0.7;
  const double leg_gap = half_torso * 0.2;

  std::array<std::array<Rgb, W>, H> img{};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double tex = 1.0 + 0.15 * std::sin(tex_fx * x + tex_fy * y + tex_phase);
      const double floor_shade = y >= H - 8 ? 0.7 : 1.0;
      Rgb c{background[0] * tex * floor_shade, background[1] * tex * floor_shade,
            background[2] * tex * floor_shade};
      const double hx = px - cx, hy = py - (top + r);
      if (hx * hx + hy * hy <= r * r) {
        c = skin;
      } else if (py >= torso_top && py < torso_bottom && std::abs(px - cx) <= half_torso) {
        c = torso;
      } else if (py >= torso_bottom && py < feet) {
        const double off = std::abs(px - cx);
        if (off >= leg_gap && off <= leg_gap + leg_w) c = legs;
      }
      img[y][x] = c;
    }
  if (occlude)
    for (int y = std::max(0, bar_y); y < std::min(H, bar_y + bar_h); ++y)
      for (int x = 0; x < W; ++x) img[y][x] = {bar_gray, bar_gray, bar_gray};

  Sample s;
  s.identity = who.id;
  s.camera = camera;
  s.pixels.resize(kPixelsPerSample);
  const std::size_t plane = std::size_t{H} * W;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int sx = flip ? W - 1 - x : x;
      for (std::size_t c = 0; c < 3; ++c) {
        double v = img[y][sx][c] * brightness + 0.02 * rng.normal();
        v = std::clamp(v, 0.0, 1.0);
        s.pixels[c * plane + static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  return s;
}

/// Identity-major dataset: identity i contributes views 0..V-1, view v
/// captured by camera v mod n_cams.
inline Dataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.n_cams = static_cast<std::uint16_t>(spec.n_cams);
  ds.samples.reserve(spec.n_identities * spec.views_per_id);
  for (std::size_t i = 0; i < spec.n_identities; ++i) {
    const auto who = make_identity(spec.seed, static_cast<std::uint32_t>(i));
    for (std::size_t v = 0; v < spec.views_per_id; ++v)
      ds.samples.push_back(render_view(spec.seed, who, v, spec.n_cams));
  }
  return ds;
}

}  // namespace lfm::data
