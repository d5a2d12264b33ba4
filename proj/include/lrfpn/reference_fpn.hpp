#pragma once

// Plain feature pyramid (1x1 laterals, nearest top-down, 3x3 stride-2 extra
// layers) assembled directly from primitive ops. It shares no code with the
// SPIEM/CIM modules and serves as the baseline oracle: an LR-FPN model with
// every ablation flag off must reproduce it bit for bit.

#include <array>
#include <cstdint>
#include <vector>

#include "lrfpn/pyramid.hpp"

namespace lrfpn::reference {

struct PlainFpn {
  ModelConfig config;
  std::array<Param, 4> backbone_weight;
  std::array<Param, 4> backbone_bias;
  std::array<Param, 3> lateral_weight;  ///< levels 2, 3, 4
  std::array<Param, 3> lateral_bias;
  Param extra4_weight, extra4_bias;
  Param extra5_weight, extra5_bias;
  Param head_weight, head_bias;

  std::vector<Param*> params();
};

/// Copies the weights the plain FPN shares with an LR-FPN model: backbone,
/// CIM output projections (used as laterals), extra layers and head.
PlainFpn from_model(LrFpnModel& model);

std::array<Var, 5> forward(Var image, PlainFpn& fpn);
Var loss(Tape& tape, PlainFpn& fpn, const Tensor& images, const Tensor& targets);

struct PlainTrace {
  std::vector<double> losses;
  PlainFpn fpn;
};

PlainTrace train(PlainFpn fpn, const TrainOptions& options, const SceneSpec& scene, std::uint64_t seed);

}  // namespace lrfpn::reference
