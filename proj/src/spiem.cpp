#include "lrfpn/spiem.hpp"

#include <fmt/format.h>

#include "lrfpn/ops.hpp"
#include "lrfpn/optim.hpp"
#include "lrfpn/rng.hpp"

namespace lrfpn {

std::size_t SpiemLevel::num_params() const {
  return wbar.numel() + wtilde.numel() + proj_weight.numel() + proj_bias.numel();
}

std::vector<Param*> SpiemLevel::params() { return {&wbar, &wtilde, &proj_weight, &proj_bias}; }

std::vector<SpiemLevel> spiem_init(std::size_t c1, const std::vector<SpiemLevelSpec>& levels,
                                   std::uint64_t seed) {
  if (levels.empty()) throw ConfigError("spiem_init: level list is empty");
  if (c1 == 0) throw ConfigError("spiem_init: F1 channel count must be positive");
  Rng rng(mix_seed(seed, 0x5e1e));
  std::vector<SpiemLevel> out;
  out.reserve(levels.size());
  for (std::size_t idx = 0; idx < levels.size(); ++idx) {
    const SpiemLevelSpec& spec = levels[idx];
    if (spec.channels == 0 || spec.height == 0 || spec.width == 0) {
      throw ConfigError(fmt::format("spiem_init: level {} has a zero dimension", idx + 2));
    }
    const int level = static_cast<int>(idx) + 2;
    const std::string prefix = fmt::format("spiem.{}.", level);
    const Shape pooled{1, c1, spec.height, spec.width};
    Tensor proj(Shape{spec.channels, c1, 1, 1});
    he_uniform(proj, c1, rng);
    out.push_back(SpiemLevel{
        level, c1, spec,
        Param(prefix + "wbar", 4, Tensor(pooled, 1.0)),
        Param(prefix + "wtilde", 4, Tensor(pooled, 1.0)),
        Param(prefix + "proj.weight", 4, std::move(proj)),
        Param(prefix + "proj.bias", 1, Tensor(Shape{spec.channels, 1, 1, 1})),
    });
  }
  return out;
}

Var spiem_forward(Var f1, SpiemLevel& level, SpiemFlags flags, ConvPath path) {
  const Shape& s = f1.shape();
  if (s.c != level.in_channels) {
    throw ShapeError(fmt::format("spiem level {}: F1 {} has {} channels, projection expects {}",
                                 level.level, s.str(), s.c, level.in_channels));
  }
  const SpiemLevelSpec& t = level.target;
  if (t.height > s.h || t.width > s.w) {
    throw ShapeError(fmt::format("spiem level {}: target {}x{} is finer than F1 {}", level.level,
                                 t.height, t.width, s.str()));
  }
  Tape& tape = *f1.tape;
  if (!flags.enabled()) return tape.constant(Tensor(Shape{s.n, t.channels, t.height, t.width}));

  std::optional<Var> fused;
  if (flags.use_pp) {
    fused = ops::hadamard(ops::adaptive_avg_pool(f1, t.height, t.width), tape.param(level.wbar));
  }
  if (flags.use_sp) {
    Var salient = ops::hadamard(ops::adaptive_max_pool(f1, t.height, t.width), tape.param(level.wtilde));
    fused = fused ? ops::add(*fused, salient) : salient;
  }
  return ops::conv2d(*fused, tape.param(level.proj_weight), tape.param(level.proj_bias), ConvSpec{1, 0},
                     path);
}

Tensor spiem_forward(const Tensor& f1, SpiemLevel& level, SpiemFlags flags, ConvPath path) {
  Tape tape;
  return spiem_forward(tape.constant(f1), level, flags, path).value();
}

}  // namespace lrfpn
