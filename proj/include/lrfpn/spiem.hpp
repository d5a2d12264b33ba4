#pragma once

// Shallow position information extraction: F1 is pooled to each target
// level's grid by an average (position) path and a max (saliency) path, each
// path is weighted elementwise, and the sum is projected to the level's
// channel count by a 1x1 convolution.

#include <cstdint>
#include <vector>

#include "lrfpn/kernels.hpp"
#include "lrfpn/tape.hpp"

namespace lrfpn {

struct SpiemFlags {
  bool use_pp = true;  ///< position pooling (adaptive average path)
  bool use_sp = true;  ///< saliency pooling (adaptive max path)

  bool enabled() const { return use_pp || use_sp; }
  friend bool operator==(const SpiemFlags&, const SpiemFlags&) = default;
};

struct SpiemLevelSpec {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
};

struct SpiemLevel {
  int level = 2;
  std::size_t in_channels = 1;  ///< C1
  SpiemLevelSpec target;
  Param wbar;    ///< [1, C1, H_i, W_i], weights the average path
  Param wtilde;  ///< [1, C1, H_i, W_i], weights the max path
  Param proj_weight;  ///< [C_i, C1, 1, 1]
  Param proj_bias;    ///< [C_i]

  std::size_t num_params() const;
  std::vector<Param*> params();
};

/// Levels are numbered 2, 3, 4 in list order. Pooling weights start at one;
/// the projection is He-uniform with zero bias.
std::vector<SpiemLevel> spiem_init(std::size_t c1, const std::vector<SpiemLevelSpec>& levels,
                                   std::uint64_t seed);

/// Returns F*_i with dims [N, C_i, H_i, W_i]. With both flags off the result is
/// an all-zero constant (no bias) that carries no gradient.
Var spiem_forward(Var f1, SpiemLevel& level, SpiemFlags flags,
                  ConvPath path = ConvPath::optimized);

/// Evaluates the module on plain tensors without keeping gradients.
Tensor spiem_forward(const Tensor& f1, SpiemLevel& level, SpiemFlags flags,
                     ConvPath path = ConvPath::optimized);

}  // namespace lrfpn
