#include "lrfpn/scene.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "lrfpn/rng.hpp"

namespace lrfpn {

void SceneSpec::validate() const {
  if (height == 0 || width == 0 || channels == 0) throw ConfigError("scene: image dims must be positive");
  if (heatmap_stride == 0 || height % heatmap_stride != 0 || width % heatmap_stride != 0) {
    throw ConfigError(fmt::format("scene: image {}x{} is not divisible by heatmap stride {}", height,
                                  width, heatmap_stride));
  }
  if (min_objects > max_objects) throw ConfigError("scene: min_objects exceeds max_objects");
  if (min_size == 0 || min_size > max_size) throw ConfigError("scene: object size range is empty");
  if (max_size > std::min(height, width)) {
    throw ConfigError(fmt::format("scene: object size {} exceeds image {}x{}", max_size, height, width));
  }
}

Scene gen_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Scene scene{Tensor(Shape{1, spec.channels, spec.height, spec.width}),
              Tensor(Shape{1, 1, spec.heatmap_h(), spec.heatmap_w()}), 0};
  for (double& v : scene.image.data()) v = rng.uniform(0.0, 0.25);

  scene.objects = rng.integer(spec.min_objects, spec.max_objects);
  for (std::size_t k = 0; k < scene.objects; ++k) {
    const std::size_t h = rng.integer(spec.min_size, spec.max_size);
    const std::size_t w = rng.integer(spec.min_size, spec.max_size);
    const std::size_t y0 = rng.integer(0, spec.height - h);
    const std::size_t x0 = rng.integer(0, spec.width - w);
    for (std::size_t c = 0; c < spec.channels; ++c) {
      const double intensity = rng.uniform(0.5, 1.0);
      for (std::size_t y = y0; y < y0 + h; ++y) {
        for (std::size_t x = x0; x < x0 + w; ++x) scene.image.at(0, c, y, x) = intensity;
      }
    }
    const std::size_t cy = (y0 + h / 2) / spec.heatmap_stride;
    const std::size_t cx = (x0 + w / 2) / spec.heatmap_stride;
    scene.heatmap.at(0, 0, cy, cx) = 1.0;
  }
  return scene;
}

Batch make_batch(const SceneSpec& spec, std::uint64_t seed, std::size_t step, std::size_t batch) {
  if (batch == 0) throw ConfigError("make_batch: batch must be positive");
  Batch b{Tensor(Shape{batch, spec.channels, spec.height, spec.width}),
          Tensor(Shape{batch, 1, spec.heatmap_h(), spec.heatmap_w()})};
  const std::uint64_t stream = mix_seed(seed, 0xda7a);
  for (std::size_t k = 0; k < batch; ++k) {
    Scene s = gen_scene(spec, mix_seed(stream, step * batch + k));
    std::copy(s.image.data().begin(), s.image.data().end(), b.images.data().begin() + k * s.image.size());
    std::copy(s.heatmap.data().begin(), s.heatmap.data().end(),
              b.heatmaps.data().begin() + k * s.heatmap.size());
  }
  return b;
}

}  // namespace lrfpn
