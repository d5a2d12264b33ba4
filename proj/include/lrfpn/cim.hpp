#pragma once

// Contextual interaction lateral connection. Three parallel branches are
// summed and projected by a 1x1 convolution:
//   local      3x3 depthwise conv (dilation 1)
//   non-local  3x3 depthwise conv (dilation `dilation`, default 2)
//   channel    x * gate(x) + x, with the gate built from GAP/GMP through a
//              shared FC, concatenated (avg, max), a second FC and a sigmoid.

#include <cstdint>
#include <vector>

#include "lrfpn/kernels.hpp"
#include "lrfpn/tape.hpp"

namespace lrfpn {

struct CimFlags {
  bool use_si = true;  ///< spatial interaction; gates both depthwise branches
  bool use_li = true;  ///< local (plain depthwise) branch
  bool use_ni = true;  ///< non-local (dilated depthwise) branch
  bool use_ci = true;  ///< channel interaction branch

  bool local() const { return use_si && use_li; }
  bool non_local() const { return use_si && use_ni; }
  bool any() const { return local() || non_local() || use_ci; }
  friend bool operator==(const CimFlags&, const CimFlags&) = default;
};

struct CimBlock {
  int level = 2;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t reduction = 4;
  std::size_t hidden = 1;  ///< max(1, in_channels / reduction)
  std::size_t dilation = 2;
  Param dw;          ///< [C, 1, 3, 3]
  Param dwd;         ///< [C, 1, 3, 3], applied with `dilation`
  Param fc1_weight;  ///< [h, C]
  Param fc1_bias;    ///< [h]
  Param fc2_weight;  ///< [C, 2h]
  Param fc2_bias;    ///< [C]
  Param proj_weight; ///< [d, C, 1, 1]
  Param proj_bias;   ///< [d]

  std::size_t num_params() const;
  std::vector<Param*> params();
};

CimBlock cim_init(std::size_t in_channels, std::size_t out_channels, std::size_t reduction,
                  std::uint64_t seed, int level = 2, std::size_t dilation = 2);

/// Per-channel gate s in (0,1)^C, shape [N, C, 1, 1].
Var channel_gate(Var x, CimBlock& block);

/// broadcast_scale(x, gate(x)) + x.
Var channel_interaction(Var x, CimBlock& block);

/// Sum of the enabled branches; x itself when every branch is disabled.
Var cim_branches(Var x, CimBlock& block, CimFlags flags);

/// out_proj(cim_branches(x)), dims [N, d, H, W].
Var cim_forward(Var x, CimBlock& block, CimFlags flags, ConvPath path = ConvPath::optimized);

Tensor cim_forward(const Tensor& x, CimBlock& block, CimFlags flags,
                   ConvPath path = ConvPath::optimized);

}  // namespace lrfpn
