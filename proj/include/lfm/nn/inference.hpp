#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "lfm/data/batches.hpp"
#include "lfm/data/dataset.hpp"
#include "lfm/feature_block.hpp"
#include "lfm/nn/model.hpp"

namespace lfm::nn {

/// Eval-mode embeddings of every sample in `images`, computed in chunks.
template <typename T>
std::vector<T> extract_embeddings(MiniResNet<T>& model, const FeatureBlock<T>& images,
                                  std::size_t chunk = 64) {
  std::vector<T> out;
  out.reserve(images.batch() * model.config().embedding_dim());
  for (std::size_t first = 0; first < images.batch(); first += chunk) {
    const std::size_t n = std::min(chunk, images.batch() - first);
    const auto res = model.forward(images.slice(first, n), Mode::eval);
    out.insert(out.end(), res.embedding.begin(), res.embedding.end());
  }
  return out;
}

template <typename T>
std::vector<T> extract_embeddings(MiniResNet<T>& model, const data::Dataset& ds,
                                  std::span<const std::size_t> indices, std::size_t chunk = 64) {
  return extract_embeddings(model, data::load_images<T>(ds, indices), chunk);
}

}  // namespace lfm::nn
