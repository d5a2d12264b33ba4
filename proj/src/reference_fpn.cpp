#include "lrfpn/reference_fpn.hpp"

#include <cmath>

#include <fmt/format.h>

#include "lrfpn/ops.hpp"

namespace lrfpn::reference {

std::vector<Param*> PlainFpn::params() {
  std::vector<Param*> out;
  for (std::size_t s = 0; s < 4; ++s) {
    out.push_back(&backbone_weight[s]);
    out.push_back(&backbone_bias[s]);
  }
  for (std::size_t l = 0; l < 3; ++l) {
    out.push_back(&lateral_weight[l]);
    out.push_back(&lateral_bias[l]);
  }
  for (Param* p : {&extra4_weight, &extra4_bias, &extra5_weight, &extra5_bias, &head_weight, &head_bias}) {
    out.push_back(p);
  }
  return out;
}

namespace {

Param copy_of(LrFpnModel& model, const std::string& name) {
  const Param* p = model.find(name);
  if (p == nullptr) throw ConfigError("plain fpn: source model has no parameter " + name);
  return Param(p->name, p->rank, p->value);
}

}  // namespace

PlainFpn from_model(LrFpnModel& model) {
  PlainFpn fpn;
  fpn.config = model.config;
  for (std::size_t s = 0; s < 4; ++s) {
    fpn.backbone_weight[s] = copy_of(model, fmt::format("backbone.{}.weight", s + 1));
    fpn.backbone_bias[s] = copy_of(model, fmt::format("backbone.{}.bias", s + 1));
  }
  for (std::size_t l = 0; l < 3; ++l) {
    fpn.lateral_weight[l] = copy_of(model, fmt::format("cim.{}.proj.weight", l + 2));
    fpn.lateral_bias[l] = copy_of(model, fmt::format("cim.{}.proj.bias", l + 2));
  }
  fpn.extra4_weight = copy_of(model, "extra.4.weight");
  fpn.extra4_bias = copy_of(model, "extra.4.bias");
  fpn.extra5_weight = copy_of(model, "extra.5.weight");
  fpn.extra5_bias = copy_of(model, "extra.5.bias");
  fpn.head_weight = copy_of(model, "head.weight");
  fpn.head_bias = copy_of(model, "head.bias");
  return fpn;
}

std::array<Var, 5> forward(Var image, PlainFpn& fpn) {
  Tape& tape = *image.tape;
  const ConvPath path = fpn.config.path;
  std::array<Var, 4> c;
  Var x = image;
  for (std::size_t s = 0; s < 4; ++s) {
    x = ops::relu(ops::conv2d(x, tape.param(fpn.backbone_weight[s]), tape.param(fpn.backbone_bias[s]),
                              ConvSpec{2, 1}, path));
    c[s] = x;
  }
  // Laterals from the coarsest level down, then the top-down sums.
  std::array<Var, 3> lat;
  for (std::size_t l = 3; l-- > 0;) {
    lat[l] = ops::conv2d(c[l + 1], tape.param(fpn.lateral_weight[l]), tape.param(fpn.lateral_bias[l]),
                         ConvSpec{1, 0}, path);
  }
  Var p3 = lat[2];
  Var p2 = ops::add(lat[1], ops::upsample_nearest2x(p3));
  Var p1 = ops::add(lat[0], ops::upsample_nearest2x(p2));
  Var p4 = ops::conv2d(p3, tape.param(fpn.extra4_weight), tape.param(fpn.extra4_bias), ConvSpec{2, 1}, path);
  Var p5 = ops::conv2d(p4, tape.param(fpn.extra5_weight), tape.param(fpn.extra5_bias), ConvSpec{2, 1}, path);
  return {p1, p2, p3, p4, p5};
}

Var loss(Tape& tape, PlainFpn& fpn, const Tensor& images, const Tensor& targets) {
  auto p = forward(tape.constant(images), fpn);
  Var pred = ops::sigmoid(ops::conv2d(p[0], tape.param(fpn.head_weight), tape.param(fpn.head_bias),
                                      ConvSpec{1, 0}, fpn.config.path));
  return ops::bce_loss(pred, targets);
}

PlainTrace train(PlainFpn fpn, const TrainOptions& options, const SceneSpec& scene, std::uint64_t seed) {
  if (options.steps == 0) throw ConfigError("plain fpn train: steps must be >= 1");
  PlainTrace trace{{}, std::move(fpn)};
  std::vector<Param*> params = trace.fpn.params();
  for (std::size_t step = 0; step < options.steps; ++step) {
    Batch batch = make_batch(scene, seed, step, options.batch);
    Tape tape;
    Var l = loss(tape, trace.fpn, batch.images, batch.heatmaps);
    if (!std::isfinite(l.value()[0])) {
      throw DivergenceError(step + 1, fmt::format("plain fpn: non-finite loss at step {}", step + 1));
    }
    tape.backward(l);
    trace.losses.push_back(l.value()[0]);
    sgd_step(params, options.sgd);
  }
  return trace;
}

}  // namespace lrfpn::reference
