#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "lfm/data/dataset.hpp"
#include "lfm/errors.hpp"
#include "lfm/feature_block.hpp"
#include "lfm/masking.hpp"
#include "lfm/rng.hpp"

namespace lfm::data {

/// Identity-disjoint train/test split. Each test identity contributes its
/// first sample (file order) as the query and the rest to the gallery.
struct SplitSpec {
  std::vector<std::uint32_t> train_ids;
  std::vector<std::uint32_t> test_ids;
  std::vector<std::size_t> train;    // sample indices
  std::vector<std::size_t> query;
  std::vector<std::size_t> gallery;
  std::map<std::uint32_t, int> class_of;  // train identity -> classifier label

  std::size_t num_classes() const noexcept { return train_ids.size(); }
};

/// The `n_train_ids` smallest identities train; the remainder test.
inline SplitSpec make_split(const Dataset& ds, std::size_t n_train_ids) {
  std::set<std::uint32_t> ids;
  for (const auto& s : ds.samples) ids.insert(s.identity);
  if (n_train_ids == 0 || n_train_ids >= ids.size())
    throw ConfigError("train identity count must leave at least one test identity");
  SplitSpec sp;
  for (auto id : ids) {
    if (sp.train_ids.size() < n_train_ids) {
      sp.class_of[id] = static_cast<int>(sp.train_ids.size());
      sp.train_ids.push_back(id);
    } else {
      sp.test_ids.push_back(id);
    }
  }
  std::set<std::uint32_t> seen_query;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto id = ds.samples[i].identity;
    if (sp.class_of.count(id)) {
      sp.train.push_back(i);
    } else if (seen_query.insert(id).second) {
      sp.query.push_back(i);
    } else {
      sp.gallery.push_back(i);
    }
  }
  for (auto q : sp.query) {
    const auto& qs = ds.samples[q];
    const bool answerable = std::any_of(sp.gallery.begin(), sp.gallery.end(), [&](std::size_t g) {
      return ds.samples[g].identity == qs.identity && ds.samples[g].camera != qs.camera;
    });
    if (!answerable)
      throw ConfigError("query identity " + std::to_string(qs.identity) +
                        " has no cross-camera gallery match");
  }
  return sp;
}

struct AugmentFlags {
  bool flip = false;
  bool pad_crop = false;
  int pad = 4;
  int cutout_side = 0;  // 0 disables cutout
  double cutout_fill = 0.0;
};

template <typename T>
struct Batch {
  FeatureBlock<T> images;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
  std::vector<bool> flipped;
};

/// Writes sample `idx` scaled to [0, 1] into slot `b` of `block`.
template <typename T>
void normalize_into(const Sample& s, FeatureBlock<T>& block, std::size_t b) {
  auto dst = block.sample(b);
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = static_cast<T>(static_cast<double>(s.pixels[i]) / 255.0);
}

template <typename T = float>
FeatureBlock<T> load_images(const Dataset& ds, std::span<const std::size_t> indices) {
  FeatureBlock<T> block(indices.size(), kImageChannels, kImageHeight, kImageWidth);
  for (std::size_t b = 0; b < indices.size(); ++b) normalize_into(ds.samples[indices[b]], block, b);
  return block;
}

/// Sequential batches over `indices`. With `train` set, order is a seeded
/// shuffle of (rng, epoch) and augmentations run per sample on
/// rng.fork("augment", epoch).fork(sample index); otherwise order is as
/// given and images are left untouched. The last batch may be short.
template <typename T = float>
class BatchStream {
 public:
  BatchStream(const Dataset& ds, std::vector<std::size_t> indices, std::vector<int> labels,
              std::size_t batch_size, RngStream rng, std::size_t epoch, bool train,
              AugmentFlags augment)
      : ds_(&ds),
        indices_(std::move(indices)),
        labels_(std::move(labels)),
        batch_size_(batch_size),
        rng_(rng),
        epoch_(epoch),
        train_(train),
        augment_(augment) {
    if (batch_size_ == 0) throw ConfigError("batch_size must be >= 1");
    if (indices_.empty()) throw ConfigError("cannot batch an empty split");
    if (labels_.size() != indices_.size()) throw StructuralError("labels and indices differ in length");
    if (augment_.cutout_side > 0) validate_cutout(kImageHeight, kImageWidth, augment_.cutout_side);
    order_.resize(indices_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (train_) {
      auto shuffle = rng_.fork("shuffle", epoch_);
      for (std::size_t i = order_.size(); i > 1; --i)
        std::swap(order_[i - 1], order_[shuffle.uniform_int(i)]);
    }
  }

  std::size_t batches() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

  std::optional<Batch<T>> next() {
    if (pos_ >= order_.size()) return std::nullopt;
    const std::size_t n = std::min(batch_size_, order_.size() - pos_);
    Batch<T> batch;
    batch.images = FeatureBlock<T>(n, kImageChannels, kImageHeight, kImageWidth);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t k = order_[pos_ + b];
      const std::size_t idx = indices_[k];
      batch.indices.push_back(idx);
      batch.labels.push_back(labels_[k]);
      normalize_into(ds_->samples[idx], batch.images, b);
      batch.flipped.push_back(train_ ? augment_sample(batch.images, b, idx) : false);
    }
    pos_ += n;
    return batch;
  }

 private:
  bool augment_sample(FeatureBlock<T>& images, std::size_t b, std::size_t idx) const {
    auto rng = rng_.fork("augment", epoch_).fork(idx);
    const std::size_t H = images.height(), W = images.width();
    bool flipped = false;
    if (augment_.flip && rng.bernoulli(0.5)) {
      flipped = true;
      for (std::size_t c = 0; c < images.channels(); ++c)
        for (std::size_t y = 0; y < H; ++y) {
          auto row = images.channel(b, c).subspan(y * W, W);
          std::reverse(row.begin(), row.end());
        }
    }
    if (augment_.pad_crop && augment_.pad > 0) {
      const int span = 2 * augment_.pad + 1;
      const int ox = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span))) - augment_.pad;
      const int oy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span))) - augment_.pad;
      for (std::size_t c = 0; c < images.channels(); ++c) {
        auto plane = images.channel(b, c);
        std::vector<T> src(plane.begin(), plane.end());
        for (int y = 0; y < static_cast<int>(H); ++y)
          for (int x = 0; x < static_cast<int>(W); ++x) {
            const int sy = y + oy, sx = x + ox;
            const bool inside = sy >= 0 && sy < static_cast<int>(H) && sx >= 0 && sx < static_cast<int>(W);
            plane[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)] =
                inside ? src[static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)] : T{0};
          }
      }
    }
    if (augment_.cutout_side > 0) {
      const auto r = cutout_region(rng, H, W, augment_.cutout_side);
      for (std::size_t c = 0; c < images.channels(); ++c)
        for (int y = r.y0; y < r.y1; ++y)
          for (int x = r.x0; x < r.x1; ++x) images(b, c, y, x) = static_cast<T>(augment_.cutout_fill);
    }
    return flipped;
  }

  const Dataset* ds_;
  std::vector<std::size_t> indices_;
  std::vector<int> labels_;
  std::size_t batch_size_;
  RngStream rng_;
  std::size_t epoch_;
  bool train_;
  AugmentFlags augment_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

enum class Role { train, query, gallery };

/// Batches one role of a split: train batches carry classifier labels and
/// are shuffled/augmented; query and gallery batches carry identities.
template <typename T = float>
BatchStream<T> make_batches(const Dataset& ds, const SplitSpec& split, Role role,
                            std::size_t batch_size, RngStream rng, std::size_t epoch,
                            AugmentFlags augment = {}) {
  const auto& idx = role == Role::train ? split.train : role == Role::query ? split.query : split.gallery;
  std::vector<int> labels;
  labels.reserve(idx.size());
  for (auto i : idx) {
    const auto id = ds.samples[i].identity;
    labels.push_back(role == Role::train ? split.class_of.at(id) : static_cast<int>(id));
  }
  return BatchStream<T>(ds, idx, std::move(labels), batch_size, rng, epoch, role == Role::train,
                        augment);
}

}  // namespace lfm::data
