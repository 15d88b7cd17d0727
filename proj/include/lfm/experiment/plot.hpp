#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lfm/image_io.hpp"

namespace lfm::experiment {

/// Minimal grayscale line chart: points evenly spaced on x, y scaled to the
/// data range, dark line and markers on a white canvas with an axis frame.
inline Image8 render_line_plot(const std::vector<double>& ys, std::size_t width = 320, std::size_t height = 200) {
  Image8 img{width, height, 1, std::vector<std::uint8_t>(width * height, 255)};
  auto put = [&](long x, long y, std::uint8_t v) {
    if (x >= 0 && y >= 0 && x < static_cast<long>(width) && y < static_cast<long>(height))
      img.data[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] = v;
  };
  const long m = 16;
  const long x0 = m, x1 = static_cast<long>(width) - m, y0 = m, y1 = static_cast<long>(height) - m;
  for (long x = x0; x <= x1; ++x) put(x, y1, 128);
  for (long y = y0; y <= y1; ++y) put(x0, y, 128);
  if (ys.empty()) return img;
  const auto [lo_it, hi_it] = std::minmax_element(ys.begin(), ys.end());
  const double lo = *lo_it, span = std::max(*hi_it - lo, 1e-12);
  auto px = [&](std::size_t i) {
    return ys.size() == 1 ? (x0 + x1) / 2 : x0 + static_cast<long>(std::lround(static_cast<double>(i) * (x1 - x0) / (ys.size() - 1)));
  };
  auto py = [&](double v) { return y1 - static_cast<long>(std::lround((v - lo) / span * (y1 - y0))); };
  for (std::size_t i = 0; i + 1 < ys.size(); ++i) {
    const long ax = px(i), ay = py(ys[i]), bx = px(i + 1), by = py(ys[i + 1]);
    const long steps = std::max(std::abs(bx - ax), std::abs(by - ay)) + 1;
    for (long s = 0; s <= steps; ++s)
      put(ax + (bx - ax) * s / steps, ay + (by - ay) * s / steps, 0);
  }
  for (std::size_t i = 0; i < ys.size(); ++i)
    for (long d = -2; d <= 2; ++d) {
      put(px(i) + d, py(ys[i]), 0);
      put(px(i), py(ys[i]) + d, 0);
    }
  return img;
}

}  // namespace lfm::experiment
