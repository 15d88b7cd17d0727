#pragma once

// Forward/backward kernels for the mini residual network. Each layer keeps
// the cache of its most recent forward pass; backward() consumes it and
// accumulates parameter gradients into the ParamSet.

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "lfm/errors.hpp"
#include "lfm/feature_block.hpp"
#include "lfm/nn/tensor.hpp"
#include "lfm/rng.hpp"

namespace lfm::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void check_finite(std::span<const T> values, const std::string& layer) {
  for (T v : values)
    if (!std::isfinite(v)) throw NumericError("non-finite activation in layer " + layer);
}

template <typename T>
void check_finite(const FeatureBlock<T>& block, const std::string& layer) {
  check_finite(std::span<const T>(block.values()), layer);
}

/// Fan-in scaled uniform init, bound sqrt(gain / fan_in).
template <typename T>
void init_uniform(Tensor<T>& t, std::size_t fan_in, double gain, RngStream rng) {
  const double bound = std::sqrt(gain / static_cast<double>(fan_in));
  for (T& v : t.values) v = static_cast<T>(rng.uniform_real(-bound, bound));
}

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamSet<T>& ps, const std::string& name, std::size_t in_c, std::size_t out_c,
         std::size_t kernel, std::size_t stride, std::size_t pad)
      : name_(name), in_c_(in_c), out_c_(out_c), k_(kernel), stride_(stride), pad_(pad) {
    w_ = ps.add(name + ".weight", {out_c, in_c, kernel, kernel}, true);
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t weight_index() const noexcept { return w_; }
  std::size_t fan_in() const noexcept { return in_c_ * k_ * k_; }

  /// One GEMM per sample, so a sample's output never depends on its
  /// position in the batch or on the batch size.
  FeatureBlock<T> forward(const FeatureBlock<T>& x, ParamSet<T>& ps) {
    if (x.channels() != in_c_)
      throw StructuralError(name_ + ": expected " + std::to_string(in_c_) + " input channels, got " +
                            std::to_string(x.channels()));
    b_ = x.batch();
    h_ = x.height();
    w_in_ = x.width();
    ho_ = (h_ + 2 * pad_ - k_) / stride_ + 1;
    wo_ = (w_in_ + 2 * pad_ - k_) / stride_ + 1;
    const auto rows = static_cast<Eigen::Index>(in_c_ * k_ * k_);
    const auto plane_out = static_cast<Eigen::Index>(ho_ * wo_);
    cols_.resize(b_);
    Eigen::Map<const RowMatrix<T>> weight(ps[w_].tensor.values.data(),
                                          static_cast<Eigen::Index>(out_c_), rows);
    FeatureBlock<T> y(b_, out_c_, ho_, wo_);
    for (std::size_t b = 0; b < b_; ++b) {
      cols_[b].resize(rows, plane_out);
      im2col(x, b);
      Eigen::Map<RowMatrix<T>> out(y.sample(b).data(), static_cast<Eigen::Index>(out_c_), plane_out);
      out.noalias() = weight * cols_[b];
    }
    return y;
  }

  /// Accumulates dW; returns dx when requested (otherwise an empty block).
  FeatureBlock<T> backward(const FeatureBlock<T>& dy, ParamSet<T>& ps, bool need_dx) {
    const auto rows = static_cast<Eigen::Index>(in_c_ * k_ * k_);
    const auto plane_out = static_cast<Eigen::Index>(ho_ * wo_);
    auto& wt = ps[w_].tensor;
    Eigen::Map<RowMatrix<T>> dw(wt.grad_buffer().data(), static_cast<Eigen::Index>(out_c_), rows);
    Eigen::Map<const RowMatrix<T>> weight(wt.values.data(), static_cast<Eigen::Index>(out_c_), rows);
    FeatureBlock<T> dx;
    if (need_dx) dx = FeatureBlock<T>(b_, in_c_, h_, w_in_);
    RowMatrix<T> d_cols;
    for (std::size_t b = 0; b < b_; ++b) {
      Eigen::Map<const RowMatrix<T>> d_out(dy.sample(b).data(), static_cast<Eigen::Index>(out_c_),
                                           plane_out);
      dw.noalias() += d_out * cols_[b].transpose();
      if (!need_dx) continue;
      d_cols.noalias() = weight.transpose() * d_out;
      col2im(d_cols, dx, b);
    }
    return dx;
  }

 private:
  template <typename F>
  void for_each_tap(F&& f) const {
    const std::size_t plane_out = ho_ * wo_;
    for (std::size_t ci = 0; ci < in_c_; ++ci)
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const std::size_t row = (ci * k_ + ky) * k_ + kx;
          for (std::size_t oy = 0; oy < ho_; ++oy) {
            const long iy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(pad_);
            const std::size_t col0 = row * plane_out + oy * wo_;
            for (std::size_t ox = 0; ox < wo_; ++ox) {
              const long ix = static_cast<long>(ox * stride_ + kx) - static_cast<long>(pad_);
              const bool inside = iy >= 0 && iy < static_cast<long>(h_) && ix >= 0 &&
                                  ix < static_cast<long>(w_in_);
              f(col0 + ox, ci, inside, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        }
  }

  void im2col(const FeatureBlock<T>& x, std::size_t b) {
    T* dst = cols_[b].data();
    for_each_tap([&](std::size_t idx, std::size_t ci, bool inside, std::size_t iy, std::size_t ix) {
      dst[idx] = inside ? x(b, ci, iy, ix) : T{0};
    });
  }

  void col2im(const RowMatrix<T>& d_cols, FeatureBlock<T>& dx, std::size_t b) const {
    const T* src = d_cols.data();
    for_each_tap([&](std::size_t idx, std::size_t ci, bool inside, std::size_t iy, std::size_t ix) {
      if (inside) dx(b, ci, iy, ix) += src[idx];
    });
  }

  std::string name_;
  std::size_t in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  std::size_t w_ = 0;
  std::size_t b_ = 0, h_ = 0, w_in_ = 0, ho_ = 0, wo_ = 0;
  std::vector<RowMatrix<T>> cols_;  // per sample: (in_c*k*k) x (ho*wo)
};

/// Batch normalization over (N, H, W) per channel. Running statistics are
/// non-trainable parameters so checkpoints carry them.
template <typename T>
class BatchNorm2d {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  BatchNorm2d() = default;
  BatchNorm2d(ParamSet<T>& ps, const std::string& name, std::size_t channels)
      : name_(name), c_(channels) {
    gamma_ = ps.add(name + ".weight", {channels}, true);
    beta_ = ps.add(name + ".bias", {channels}, true);
    mean_ = ps.add(name + ".running_mean", {channels}, false);
    var_ = ps.add(name + ".running_var", {channels}, false);
    std::fill(ps[gamma_].tensor.values.begin(), ps[gamma_].tensor.values.end(), T{1});
    std::fill(ps[var_].tensor.values.begin(), ps[var_].tensor.values.end(), T{1});
  }

  FeatureBlock<T> forward(const FeatureBlock<T>& x, ParamSet<T>& ps, bool train) {
    if (x.channels() != c_) throw StructuralError(name_ + ": channel mismatch");
    train_ = train;
    const std::size_t n = x.batch() * x.plane();
    auto& gamma = ps[gamma_].tensor.values;
    auto& beta = ps[beta_].tensor.values;
    auto& rmean = ps[mean_].tensor.values;
    auto& rvar = ps[var_].tensor.values;
    inv_std_.assign(c_, T{0});
    xhat_ = FeatureBlock<T>(x.batch(), c_, x.height(), x.width());
    FeatureBlock<T> y(x.batch(), c_, x.height(), x.width());
    for (std::size_t c = 0; c < c_; ++c) {
      double mean = 0.0, var = 0.0;
      if (train) {
        for (std::size_t b = 0; b < x.batch(); ++b)
          for (T v : x.channel(b, c)) mean += v;
        mean /= static_cast<double>(n);
        for (std::size_t b = 0; b < x.batch(); ++b)
          for (T v : x.channel(b, c)) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        const double unbiased = n > 1 ? var * static_cast<double>(n) / static_cast<double>(n - 1) : var;
        rmean[c] = static_cast<T>((1.0 - kMomentum) * rmean[c] + kMomentum * mean);
        rvar[c] = static_cast<T>((1.0 - kMomentum) * rvar[c] + kMomentum * unbiased);
      } else {
        mean = rmean[c];
        var = rvar[c];
      }
      const T inv = static_cast<T>(1.0 / std::sqrt(var + kEps));
      const T m = static_cast<T>(mean);
      inv_std_[c] = inv;
      for (std::size_t b = 0; b < x.batch(); ++b) {
        auto src = x.channel(b, c);
        auto xh = xhat_.channel(b, c);
        auto dst = y.channel(b, c);
        for (std::size_t i = 0; i < src.size(); ++i) {
          xh[i] = (src[i] - m) * inv;
          dst[i] = gamma[c] * xh[i] + beta[c];
        }
      }
    }
    return y;
  }

  FeatureBlock<T> backward(const FeatureBlock<T>& dy, ParamSet<T>& ps) {
    auto& gamma = ps[gamma_].tensor.values;
    auto& dgamma = ps[gamma_].tensor.grad_buffer();
    auto& dbeta = ps[beta_].tensor.grad_buffer();
    const std::size_t n = dy.batch() * dy.plane();
    FeatureBlock<T> dx(dy.batch(), c_, dy.height(), dy.width());
    for (std::size_t c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < dy.batch(); ++b) {
        auto g = dy.channel(b, c);
        auto xh = xhat_.channel(b, c);
        for (std::size_t i = 0; i < g.size(); ++i) {
          sum_dy += g[i];
          sum_dy_xhat += static_cast<double>(g[i]) * xh[i];
        }
      }
      dgamma[c] += static_cast<T>(sum_dy_xhat);
      dbeta[c] += static_cast<T>(sum_dy);
      const T scale = gamma[c] * inv_std_[c];
      if (train_) {
        const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(n));
        const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / static_cast<double>(n));
        for (std::size_t b = 0; b < dy.batch(); ++b) {
          auto g = dy.channel(b, c);
          auto xh = xhat_.channel(b, c);
          auto out = dx.channel(b, c);
          for (std::size_t i = 0; i < g.size(); ++i)
            out[i] = scale * (g[i] - mean_dy - xh[i] * mean_dy_xhat);
        }
      } else {
        for (std::size_t b = 0; b < dy.batch(); ++b) {
          auto g = dy.channel(b, c);
          auto out = dx.channel(b, c);
          for (std::size_t i = 0; i < g.size(); ++i) out[i] = scale * g[i];
        }
      }
    }
    return dx;
  }

 private:
  std::string name_;
  std::size_t c_ = 0;
  std::size_t gamma_ = 0, beta_ = 0, mean_ = 0, var_ = 0;
  bool train_ = false;
  std::vector<T> inv_std_;
  FeatureBlock<T> xhat_;
};

template <typename T>
class Relu {
 public:
  void forward_inplace(FeatureBlock<T>& x) {
    for (T& v : x.values()) v = v > T{0} ? v : T{0};
    out_ = x;
  }
  /// Folds the on/off pattern of the last forward into `h`.
  void fold_pattern(std::uint64_t& h) const {
    std::uint64_t word = 0;
    const auto& o = out_.values();
    for (std::size_t i = 0; i < o.size(); ++i) {
      word = (word << 1) | static_cast<std::uint64_t>(o[i] > T{0});
      if (i % 64 == 63) h = detail::mix(h, word);
    }
    h = detail::mix(h, word);
  }

  void backward_inplace(FeatureBlock<T>& dy) const {
    const auto& o = out_.values();
    auto& g = dy.values();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(o[i] > T{0})) g[i] = T{0};
  }

 private:
  FeatureBlock<T> out_;
};

/// 2x2 max pooling with stride 2 (odd trailing rows/columns are dropped).
template <typename T>
class MaxPool2 {
 public:
  FeatureBlock<T> forward(const FeatureBlock<T>& x) {
    in_ = {x.batch(), x.channels(), x.height(), x.width()};
    const std::size_t ho = x.height() / 2, wo = x.width() / 2;
    if (ho == 0 || wo == 0) throw StructuralError("maxpool input smaller than 2x2");
    FeatureBlock<T> y(x.batch(), x.channels(), ho, wo);
    argmax_.assign(y.size(), 0);
    std::size_t k = 0;
    for (std::size_t b = 0; b < x.batch(); ++b)
      for (std::size_t c = 0; c < x.channels(); ++c) {
        auto plane = x.channel(b, c);
        for (std::size_t oy = 0; oy < ho; ++oy)
          for (std::size_t ox = 0; ox < wo; ++ox, ++k) {
            std::size_t best = (2 * oy) * x.width() + 2 * ox;
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t idx = (2 * oy + dy) * x.width() + 2 * ox + dx;
                if (plane[idx] > plane[best]) best = idx;
              }
            argmax_[k] = best;
            y.values()[k] = plane[best];
          }
      }
    return y;
  }

  void fold_pattern(std::uint64_t& h) const {
    for (auto a : argmax_) h = detail::mix(h, a);
  }

  FeatureBlock<T> backward(const FeatureBlock<T>& dy) const {
    FeatureBlock<T> dx(in_[0], in_[1], in_[2], in_[3]);
    const std::size_t plane_out = dy.plane();
    for (std::size_t k = 0; k < dy.size(); ++k) {
      const std::size_t bc = k / plane_out;
      dx.values()[bc * dx.plane() + argmax_[k]] += dy.values()[k];
    }
    return dx;
  }

 private:
  std::array<std::size_t, 4> in_{};
  std::vector<std::size_t> argmax_;
};

/// Global average pool: (B, C, H, W) -> row-major B x C.
template <typename T>
std::vector<T> global_avg_pool(const FeatureBlock<T>& x) {
  std::vector<T> out(x.batch() * x.channels());
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t c = 0; c < x.channels(); ++c) {
      double s = 0.0;
      for (T v : x.channel(b, c)) s += v;
      out[b * x.channels() + c] = static_cast<T>(s / static_cast<double>(x.plane()));
    }
  return out;
}

template <typename T>
FeatureBlock<T> global_avg_pool_backward(std::span<const T> dy, std::size_t batch,
                                         std::size_t channels, std::size_t height,
                                         std::size_t width) {
  FeatureBlock<T> dx(batch, channels, height, width);
  const T inv = static_cast<T>(1.0 / static_cast<double>(height * width));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      const T g = dy[b * channels + c] * inv;
      for (T& v : dx.channel(b, c)) v = g;
    }
  return dx;
}

/// y = x W^T + b with W shaped (out, in).
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t out)
      : in_(in), out_(out) {
    w_ = ps.add(name + ".weight", {out, in}, true);
    b_ = ps.add(name + ".bias", {out}, true);
  }

  std::size_t weight_index() const noexcept { return w_; }
  std::size_t bias_index() const noexcept { return b_; }

  std::vector<T> forward(std::span<const T> x, std::size_t batch, ParamSet<T>& ps) {
    x_.assign(x.begin(), x.end());
    batch_ = batch;
    Eigen::Map<const RowMatrix<T>> xm(x_.data(), static_cast<Eigen::Index>(batch),
                                      static_cast<Eigen::Index>(in_));
    Eigen::Map<const RowMatrix<T>> w(ps[w_].tensor.values.data(), static_cast<Eigen::Index>(out_),
                                     static_cast<Eigen::Index>(in_));
    std::vector<T> y(batch * out_);
    Eigen::Map<RowMatrix<T>> ym(y.data(), static_cast<Eigen::Index>(batch),
                                static_cast<Eigen::Index>(out_));
    // Row by row so each sample takes the same kernel path.
    for (Eigen::Index i = 0; i < ym.rows(); ++i) ym.row(i).noalias() = xm.row(i) * w.transpose();
    const auto& bias = ps[b_].tensor.values;
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t k = 0; k < out_; ++k) y[i * out_ + k] += bias[k];
    return y;
  }

  std::vector<T> backward(std::span<const T> dy, ParamSet<T>& ps) {
    Eigen::Map<const RowMatrix<T>> dym(dy.data(), static_cast<Eigen::Index>(batch_),
                                       static_cast<Eigen::Index>(out_));
    Eigen::Map<const RowMatrix<T>> xm(x_.data(), static_cast<Eigen::Index>(batch_),
                                      static_cast<Eigen::Index>(in_));
    auto& wt = ps[w_].tensor;
    Eigen::Map<RowMatrix<T>> dw(wt.grad_buffer().data(), static_cast<Eigen::Index>(out_),
                                static_cast<Eigen::Index>(in_));
    dw.noalias() += dym.transpose() * xm;
    auto& db = ps[b_].tensor.grad_buffer();
    for (std::size_t i = 0; i < batch_; ++i)
      for (std::size_t k = 0; k < out_; ++k) db[k] += dy[i * out_ + k];
    Eigen::Map<const RowMatrix<T>> w(wt.values.data(), static_cast<Eigen::Index>(out_),
                                     static_cast<Eigen::Index>(in_));
    std::vector<T> dx(batch_ * in_);
    Eigen::Map<RowMatrix<T>> dxm(dx.data(), static_cast<Eigen::Index>(batch_),
                                 static_cast<Eigen::Index>(in_));
    for (Eigen::Index i = 0; i < dxm.rows(); ++i) dxm.row(i).noalias() = dym.row(i) * w;
    return dx;
  }

 private:
  std::size_t in_ = 0, out_ = 0, w_ = 0, b_ = 0, batch_ = 0;
  std::vector<T> x_;
};

}  // namespace lfm::nn
