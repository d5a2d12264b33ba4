#pragma once

// Full LR-FPN neck with the toy backbone and heatmap head that close the
// training loop.
//
//   F1..F4   backbone stages (3x3 stride-2 conv + relu each)
//   F*_i     spiem_forward(F1, level i)                      i = 2, 3, 4
//   P3       = f4(F4 + F*_4)
//   P2       = f3(F3 + F*_3) + up2(P3)
//   P1       = f2(F2 + F*_2) + up2(P2)
//   P4, P5   = 3x3 stride-2 convs of P3 and P4
//   head     = sigmoid(1x1 conv(P1))
//
// f_i is the CIM lateral connection. With every ablation flag off the model is
// exactly a plain FPN with 1x1 laterals.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lrfpn/cim.hpp"
#include "lrfpn/kernels.hpp"
#include "lrfpn/optim.hpp"
#include "lrfpn/scene.hpp"
#include "lrfpn/spiem.hpp"
#include "lrfpn/tape.hpp"

namespace lrfpn {

struct AblationFlags {
  SpiemFlags spiem;
  CimFlags cim;

  static AblationFlags all() { return {}; }
  static AblationFlags none() { return {{false, false}, {false, false, false, false}}; }
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct ModelConfig {
  std::size_t image_channels = 3;
  std::size_t image_size = 64;
  std::array<std::size_t, 4> stage_channels{8, 16, 32, 64};
  std::size_t pyramid_channels = 16;  ///< d
  std::size_t reduction = 4;
  std::size_t dilation = 2;
  ConvPath path = ConvPath::optimized;

  void validate() const;
  /// Spatial side of backbone stage s (0-based), image_size / 2^(s+1).
  std::size_t stage_size(std::size_t s) const { return image_size >> (s + 1); }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// 3x16x16 input, stages 2/4/8/16, d = 4.
ModelConfig miniature_config();

struct LrFpnModel {
  ModelConfig config;
  AblationFlags flags;
  std::array<Param, 4> backbone_weight;
  std::array<Param, 4> backbone_bias;
  std::vector<SpiemLevel> spiem;  ///< levels 2, 3, 4
  std::vector<CimBlock> cim;      ///< f2, f3, f4
  Param extra4_weight, extra4_bias;
  Param extra5_weight, extra5_bias;
  Param head_weight, head_bias;

  /// Every parameter in checkpoint order.
  std::vector<Param*> params();
  std::size_t num_params();
  /// nullptr when no parameter has that name.
  Param* find(const std::string& name);
};

LrFpnModel make_model(const ModelConfig& config, AblationFlags flags, std::uint64_t seed);

using FeatureMaps = std::array<Var, 4>;  ///< F1..F4
using PyramidMaps = std::array<Var, 5>;  ///< P1..P5

FeatureMaps backbone_forward(Var image, LrFpnModel& model);

/// Throws ShapeError naming the offending pair if the F chain does not halve.
PyramidMaps build_pyramid(const FeatureMaps& f, LrFpnModel& model);
std::array<Tensor, 5> build_pyramid(const std::array<Tensor, 4>& f, LrFpnModel& model);

/// Expected P1..P5 dims for batch size n.
std::array<Shape, 5> pyramid_shapes(const ModelConfig& config, std::size_t n = 1);

Var head_forward(Var p1, LrFpnModel& model);

/// bce_loss(head(P1), targets) for an image batch.
Var forward_loss(Tape& tape, LrFpnModel& model, const Tensor& images, const Tensor& targets);

struct TrainOptions {
  std::size_t steps = 300;
  std::size_t batch = 4;
  SgdOptions sgd{0.01, 0.9, 1e-4};

  friend bool operator==(const TrainOptions&, const TrainOptions&) = default;
};

struct TrainTrace {
  std::vector<double> losses;  ///< loss at each step, before that step's update
  LrFpnModel model;            ///< parameters after the final step
  double init_seconds = 0.0;
  double train_seconds = 0.0;
};

/// Scene spec whose heatmap grid matches P1 for the given model.
SceneSpec scene_for(const ModelConfig& config, SceneSpec base = {});

/// SGD over fresh synthetic batches; throws DivergenceError on a non-finite loss.
TrainTrace train_toy(const ModelConfig& config, AblationFlags flags, const TrainOptions& options,
                     const SceneSpec& scene, std::uint64_t seed);

/// Continues training an existing model.
TrainTrace train_toy(LrFpnModel model, const TrainOptions& options, const SceneSpec& scene,
                     std::uint64_t seed);

}  // namespace lrfpn
