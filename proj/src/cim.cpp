#include "lrfpn/cim.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "lrfpn/ops.hpp"
#include "lrfpn/optim.hpp"
#include "lrfpn/rng.hpp"

namespace lrfpn {

std::size_t CimBlock::num_params() const {
  return dw.numel() + dwd.numel() + fc1_weight.numel() + fc1_bias.numel() + fc2_weight.numel() +
         fc2_bias.numel() + proj_weight.numel() + proj_bias.numel();
}

std::vector<Param*> CimBlock::params() {
  return {&dw, &dwd, &fc1_weight, &fc1_bias, &fc2_weight, &fc2_bias, &proj_weight, &proj_bias};
}

CimBlock cim_init(std::size_t in_channels, std::size_t out_channels, std::size_t reduction,
                  std::uint64_t seed, int level, std::size_t dilation) {
  if (reduction == 0) throw ConfigError("cim_init: reduction ratio must be positive");
  if (in_channels == 0 || out_channels == 0) throw ConfigError("cim_init: channel counts must be positive");
  if (dilation == 0) throw ConfigError("cim_init: dilation must be positive");
  const std::size_t c = in_channels;
  const std::size_t h = std::max<std::size_t>(1, c / reduction);
  Rng rng(mix_seed(seed, 0xc1a0 + static_cast<std::uint64_t>(level)));
  const std::string prefix = fmt::format("cim.{}.", level);

  Tensor dw(Shape{c, 1, 3, 3}), dwd(Shape{c, 1, 3, 3});
  he_uniform(dw, 9, rng);
  he_uniform(dwd, 9, rng);
  Tensor fc1(Shape{h, c, 1, 1}), fc2(Shape{c, 2 * h, 1, 1}), proj(Shape{out_channels, c, 1, 1});
  he_uniform(fc1, c, rng);
  he_uniform(fc2, 2 * h, rng);
  he_uniform(proj, c, rng);

  return CimBlock{
      level, c, out_channels, reduction, h, dilation,
      Param(prefix + "dw", 4, std::move(dw)),
      Param(prefix + "dwd", 4, std::move(dwd)),
      Param(prefix + "fc1.weight", 2, std::move(fc1)),
      Param(prefix + "fc1.bias", 1, Tensor(Shape{h, 1, 1, 1})),
      Param(prefix + "fc2.weight", 2, std::move(fc2)),
      Param(prefix + "fc2.bias", 1, Tensor(Shape{c, 1, 1, 1})),
      Param(prefix + "proj.weight", 4, std::move(proj)),
      Param(prefix + "proj.bias", 1, Tensor(Shape{out_channels, 1, 1, 1})),
  };
}

namespace {

void check_channels(const Var& x, const CimBlock& block) {
  if (x.shape().c != block.in_channels) {
    throw ShapeError(fmt::format("cim level {}: input {} has {} channels, block expects {}", block.level,
                                 x.shape().str(), x.shape().c, block.in_channels));
  }
}

}  // namespace

Var channel_gate(Var x, CimBlock& block) {
  check_channels(x, block);
  Tape& tape = *x.tape;
  Var w1 = tape.param(block.fc1_weight);
  Var b1 = tape.param(block.fc1_bias);
  Var avg = ops::relu(ops::fully_connected(ops::global_avg_pool(x), w1, b1));
  Var max = ops::relu(ops::fully_connected(ops::global_max_pool(x), w1, b1));
  return ops::sigmoid(ops::fully_connected(ops::concat_channels(avg, max), tape.param(block.fc2_weight),
                                           tape.param(block.fc2_bias)));
}

Var channel_interaction(Var x, CimBlock& block) {
  return ops::add(ops::broadcast_scale(x, channel_gate(x, block)), x);
}

Var cim_branches(Var x, CimBlock& block, CimFlags flags) {
  check_channels(x, block);
  Tape& tape = *x.tape;
  std::optional<Var> acc;
  auto fold = [&acc](Var v) { acc = acc ? ops::add(*acc, v) : v; };
  if (flags.local()) fold(ops::depthwise_conv2d(x, tape.param(block.dw), 1, 1));
  if (flags.non_local()) {
    fold(ops::depthwise_conv2d(x, tape.param(block.dwd), block.dilation, block.dilation));
  }
  if (flags.use_ci) fold(channel_interaction(x, block));
  return acc ? *acc : x;
}

Var cim_forward(Var x, CimBlock& block, CimFlags flags, ConvPath path) {
  Var fused = cim_branches(x, block, flags);
  Tape& tape = *x.tape;
  return ops::conv2d(fused, tape.param(block.proj_weight), tape.param(block.proj_bias), ConvSpec{1, 0},
                     path);
}

Tensor cim_forward(const Tensor& x, CimBlock& block, CimFlags flags, ConvPath path) {
  Tape tape;
  return cim_forward(tape.constant(x), block, flags, path).value();
}

}  // namespace lrfpn
