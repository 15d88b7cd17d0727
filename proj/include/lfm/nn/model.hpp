#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfm/errors.hpp"
#include "lfm/feature_block.hpp"
#include "lfm/masking.hpp"
#include "lfm/nn/layers.hpp"
#include "lfm/nn/tensor.hpp"
#include "lfm/rng.hpp"

namespace lfm::nn {

enum class Mode { train, eval };

struct MiniResNetConfig {
  std::size_t in_channels = 3;
  std::size_t in_height = 64;
  std::size_t in_width = 32;
  std::size_t stem_channels = 16;
  std::array<std::size_t, 3> stage_widths{16, 32, 64};
  std::size_t blocks_per_stage = 2;
  std::size_t num_classes = 50;
  bool lfm_enabled = false;
  LfmConfig lfm = LfmConfig::defaults_for(16);
  double label_smoothing = 0.0;
  double dropout = 0.0;          // element dropout on the embedding, before the classifier
  double spatial_dropout = 0.0;  // channel dropout at the masking site

  std::size_t embedding_dim() const noexcept { return stage_widths.back(); }

  void validate() const {
    if (in_channels == 0 || in_height < 8 || in_width < 8)
      throw ConfigError("model input must be at least 8x8 with >= 1 channel");
    if (stem_channels == 0 || blocks_per_stage == 0 || num_classes == 0)
      throw ConfigError("model widths, block count and class count must be positive");
    for (auto w : stage_widths)
      if (w == 0) throw ConfigError("stage widths must be positive");
    if (lfm_enabled) lfm.validate_for(stem_channels);
    if (!(label_smoothing >= 0.0 && label_smoothing <= 0.3))
      throw ConfigError("label_smoothing must lie in [0, 0.3]");
    validate_drop_rate(dropout);
    validate_drop_rate(spatial_dropout);
  }
};

template <typename T>
struct ForwardOutput {
  std::vector<T> logits;     // B x num_classes, row-major
  std::vector<T> embedding;  // B x embedding_dim, row-major
  std::vector<MaskDecision> decisions;
};

/// conv3x3-BN-ReLU-conv3x3-BN plus identity or 1x1-projection shortcut, then ReLU.
template <typename T>
class BasicBlock {
 public:
  BasicBlock(ParamSet<T>& ps, const std::string& name, std::size_t in_c, std::size_t out_c,
             std::size_t stride)
      : name_(name),
        conv1_(ps, name + ".conv1", in_c, out_c, 3, stride, 1),
        bn1_(ps, name + ".bn1", out_c),
        conv2_(ps, name + ".conv2", out_c, out_c, 3, 1, 1),
        bn2_(ps, name + ".bn2", out_c) {
    if (stride != 1 || in_c != out_c) {
      proj_conv_.emplace(ps, name + ".downsample.conv", in_c, out_c, 1, stride, 0);
      proj_bn_.emplace(ps, name + ".downsample.bn", out_c);
    }
  }

  std::vector<Conv2d<T>*> convs() {
    std::vector<Conv2d<T>*> v{&conv1_, &conv2_};
    if (proj_conv_) v.push_back(&*proj_conv_);
    return v;
  }

  FeatureBlock<T> forward(const FeatureBlock<T>& x, ParamSet<T>& ps, bool train) {
    auto h = bn1_.forward(conv1_.forward(x, ps), ps, train);
    relu1_.forward_inplace(h);
    auto out = bn2_.forward(conv2_.forward(h, ps), ps, train);
    if (proj_conv_) {
      const auto sc = proj_bn_->forward(proj_conv_->forward(x, ps), ps, train);
      add_inplace(out, sc);
    } else {
      add_inplace(out, x);
    }
    relu_out_.forward_inplace(out);
    check_finite(out, name_);
    return out;
  }

  void fold_pattern(std::uint64_t& h) const {
    relu1_.fold_pattern(h);
    relu_out_.fold_pattern(h);
  }

  FeatureBlock<T> backward(FeatureBlock<T> dy, ParamSet<T>& ps) {
    relu_out_.backward_inplace(dy);
    FeatureBlock<T> d_short;
    if (proj_conv_) {
      d_short = proj_conv_->backward(proj_bn_->backward(dy, ps), ps, true);
    } else {
      d_short = dy;
    }
    auto dh = conv2_.backward(bn2_.backward(dy, ps), ps, true);
    relu1_.backward_inplace(dh);
    auto dx = conv1_.backward(bn1_.backward(dh, ps), ps, true);
    add_inplace(dx, d_short);
    return dx;
  }

 private:
  static void add_inplace(FeatureBlock<T>& a, const FeatureBlock<T>& b) {
    auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
  }

  std::string name_;
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Relu<T> relu1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  std::optional<Conv2d<T>> proj_conv_;
  std::optional<BatchNorm2d<T>> proj_bn_;
  Relu<T> relu_out_;
};

/// Miniature residual network:
///   conv3x3 stem - BN - ReLU - [local feature masking] - maxpool 2x2
///   - residual stages - global average pool (embedding) - linear classifier.
/// Masking only runs in train mode.
template <typename T>
class MiniResNet {
 public:
  explicit MiniResNet(MiniResNetConfig cfg, std::uint64_t init_seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    stem_conv_ = Conv2d<T>(params_, "stem.conv", cfg_.in_channels, cfg_.stem_channels, 3, 1, 1);
    stem_bn_ = BatchNorm2d<T>(params_, "stem.bn", cfg_.stem_channels);
    std::size_t in_c = cfg_.stem_channels;
    for (std::size_t s = 0; s < cfg_.stage_widths.size(); ++s) {
      for (std::size_t k = 0; k < cfg_.blocks_per_stage; ++k) {
        const std::size_t stride = (s > 0 && k == 0) ? 2 : 1;
        const std::string name = "layer" + std::to_string(s + 1) + "." + std::to_string(k);
        blocks_.emplace_back(params_, name, in_c, cfg_.stage_widths[s], stride);
        in_c = cfg_.stage_widths[s];
      }
    }
    fc_ = Linear<T>(params_, "fc", cfg_.embedding_dim(), cfg_.num_classes);
    initialize(init_seed);
  }

  const MiniResNetConfig& config() const noexcept { return cfg_; }
  MiniResNetConfig& mutable_config() noexcept { return cfg_; }
  ParamSet<T>& params() noexcept { return params_; }
  const ParamSet<T>& params() const noexcept { return params_; }

  std::size_t forward_calls() const noexcept { return forward_calls_; }
  std::size_t backward_calls() const noexcept { return backward_calls_; }

  /// Fan-in scaled uniform weights from RngStream(seed, "init"); BN scale 1, shift 0.
  void initialize(std::uint64_t seed) {
    const RngStream base(seed, "init");
    std::vector<Conv2d<T>*> convs{&stem_conv_};
    for (auto& b : blocks_)
      for (auto* c : b.convs()) convs.push_back(c);
    for (auto* c : convs)
      init_uniform(params_[c->weight_index()].tensor, c->fan_in(), 6.0,
                   base.fork(c->weight_index()));
    init_uniform(params_[fc_.weight_index()].tensor, cfg_.embedding_dim(), 1.0,
                 base.fork(fc_.weight_index()));
    auto& bias = params_[fc_.bias_index()].tensor.values;
    std::fill(bias.begin(), bias.end(), T{0});
  }

  /// `rng` drives the stochastic layers in train mode. `replay`, when given,
  /// substitutes recorded mask decisions for fresh masking draws.
  ForwardOutput<T> forward(const FeatureBlock<T>& images, Mode mode,
                           const RngStream* rng = nullptr,
                           const std::vector<MaskDecision>* replay = nullptr) {
    if (images.channels() != cfg_.in_channels || images.height() != cfg_.in_height ||
        images.width() != cfg_.in_width)
      throw StructuralError("model input " + images.shape_string() + " does not match (B," +
                            std::to_string(cfg_.in_channels) + "," +
                            std::to_string(cfg_.in_height) + "," + std::to_string(cfg_.in_width) +
                            ")");
    ++forward_calls_;
    const bool train = mode == Mode::train;
    const bool stochastic = train && (cfg_.lfm_enabled || cfg_.spatial_dropout > 0.0 ||
                                      cfg_.dropout > 0.0);
    if (stochastic && rng == nullptr && replay == nullptr)
      throw StructuralError("train-mode forward with stochastic layers requires an rng");
    batch_ = images.batch();
    ForwardOutput<T> out;

    auto x = stem_bn_.forward(stem_conv_.forward(images, params_), params_, train);
    check_finite(x, "stem");
    stem_relu_.forward_inplace(x);
    stem_h_ = x.height();
    stem_w_ = x.width();

    mask_decisions_.clear();
    if (replay != nullptr) {
      mask_decisions_ = *replay;
      lfm_replay(x, std::span<const MaskDecision>(mask_decisions_));
    } else if (train && cfg_.lfm_enabled) {
      mask_decisions_ = lfm_apply_inplace(x, cfg_.lfm, rng->fork("lfm"), true);
    }
    if (train) out.decisions = mask_decisions_;

    spatial_scale_.clear();
    if (train && cfg_.spatial_dropout > 0.0 && rng != nullptr) {
      spatial_scale_ = channel_dropout_mask<T>(x.batch(), x.channels(), cfg_.spatial_dropout,
                                               rng->fork("spatial_dropout"));
      for (std::size_t b = 0; b < x.batch(); ++b)
        for (std::size_t c = 0; c < x.channels(); ++c)
          for (T& v : x.channel(b, c)) v *= spatial_scale_[b * x.channels() + c];
    }

    x = pool_.forward(x);
    for (auto& block : blocks_) x = block.forward(x, params_, train);
    last_h_ = x.height();
    last_w_ = x.width();

    out.embedding = global_avg_pool(x);
    std::vector<T> features = out.embedding;
    dropout_scale_.clear();
    if (train && cfg_.dropout > 0.0 && rng != nullptr) {
      dropout_scale_ = element_dropout_mask<T>(features.size(), cfg_.dropout, rng->fork("dropout"));
      for (std::size_t i = 0; i < features.size(); ++i) features[i] *= dropout_scale_[i];
    }
    out.logits = fc_.forward(features, batch_, params_);
    check_finite(std::span<const T>(out.logits), "fc");
    return out;
  }

  /// Backpropagates d(loss)/d(logits) and, optionally, an extra gradient on
  /// the embedding. Parameter gradients accumulate; the image gradient is
  /// returned when `need_input_grad` is set.
  std::optional<FeatureBlock<T>> backward(std::span<const T> d_logits,
                                          std::span<const T> d_embedding = {},
                                          bool need_input_grad = false) {
    ++backward_calls_;
    const std::size_t d = cfg_.embedding_dim();
    std::vector<T> d_feat(batch_ * d, T{0});
    if (!d_logits.empty()) {
      if (d_logits.size() != batch_ * cfg_.num_classes)
        throw StructuralError("logit gradient has wrong size");
      d_feat = fc_.backward(d_logits, params_);
      if (!dropout_scale_.empty())
        for (std::size_t i = 0; i < d_feat.size(); ++i) d_feat[i] *= dropout_scale_[i];
    }
    if (!d_embedding.empty()) {
      if (d_embedding.size() != d_feat.size())
        throw StructuralError("embedding gradient has wrong size");
      for (std::size_t i = 0; i < d_feat.size(); ++i) d_feat[i] += d_embedding[i];
    }
    auto g = global_avg_pool_backward<T>(d_feat, batch_, d, last_h_, last_w_);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(std::move(g), params_);
    g = pool_.backward(g);
    if (!spatial_scale_.empty())
      for (std::size_t b = 0; b < g.batch(); ++b)
        for (std::size_t c = 0; c < g.channels(); ++c)
          for (T& v : g.channel(b, c)) v *= spatial_scale_[b * g.channels() + c];
    lfm_backward(g, std::span<const MaskDecision>(mask_decisions_));
    stem_grad_ = g;
    stem_relu_.backward_inplace(g);
    g = stem_bn_.backward(g, params_);
    auto dx = stem_conv_.backward(g, params_, need_input_grad);
    if (!need_input_grad) return std::nullopt;
    return dx;
  }

  /// Hash of every ReLU on/off state and maxpool winner in the last forward
  /// pass: equal hashes mean the same piecewise-smooth branch was taken.
  std::uint64_t activation_pattern() const {
    std::uint64_t h = 0;
    stem_relu_.fold_pattern(h);
    pool_.fold_pattern(h);
    for (const auto& b : blocks_) b.fold_pattern(h);
    return h;
  }

  /// Gradient w.r.t. the masking-site activations from the last backward().
  const FeatureBlock<T>& stem_grad() const noexcept { return stem_grad_; }

  /// Stem activations (conv-BN-ReLU, eval-mode statistics): the map that
  /// local feature masking operates on.
  FeatureBlock<T> stem_features(const FeatureBlock<T>& images) {
    auto x = stem_bn_.forward(stem_conv_.forward(images, params_), params_, false);
    Relu<T> relu;
    relu.forward_inplace(x);
    return x;
  }

 private:
  MiniResNetConfig cfg_;
  ParamSet<T> params_;
  Conv2d<T> stem_conv_;
  BatchNorm2d<T> stem_bn_;
  Relu<T> stem_relu_;
  MaxPool2<T> pool_;
  std::vector<BasicBlock<T>> blocks_;
  Linear<T> fc_;

  std::size_t batch_ = 0, stem_h_ = 0, stem_w_ = 0, last_h_ = 0, last_w_ = 0;
  std::vector<MaskDecision> mask_decisions_;
  std::vector<T> spatial_scale_;
  std::vector<T> dropout_scale_;
  FeatureBlock<T> stem_grad_;
  std::size_t forward_calls_ = 0, backward_calls_ = 0;
};

}  // namespace lfm::nn
