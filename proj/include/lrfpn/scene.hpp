#pragma once

// Synthetic dense small-object scenes: a noisy background with a handful of
// small bright rectangles, plus a binary heatmap marking each object's centre
// cell on a grid `heatmap_stride` times coarser than the image.

#include <cstdint>

#include "lrfpn/tensor.hpp"

namespace lrfpn {

struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t channels = 3;
  std::size_t min_objects = 6;
  std::size_t max_objects = 14;
  std::size_t min_size = 2;
  std::size_t max_size = 5;
  std::size_t heatmap_stride = 4;

  void validate() const;
  std::size_t heatmap_h() const { return height / heatmap_stride; }
  std::size_t heatmap_w() const { return width / heatmap_stride; }
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct Scene {
  Tensor image;    ///< [1, channels, height, width]
  Tensor heatmap;  ///< [1, 1, height / stride, width / stride], values in {0, 1}
  std::size_t objects = 0;
};

Scene gen_scene(const SceneSpec& spec, std::uint64_t seed);

struct Batch {
  Tensor images;
  Tensor heatmaps;
};

/// Batch for one training step; sample k of step t is gen_scene with a seed
/// derived from (seed, t * batch + k).
Batch make_batch(const SceneSpec& spec, std::uint64_t seed, std::size_t step, std::size_t batch);

}  // namespace lrfpn
