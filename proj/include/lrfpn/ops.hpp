#pragma once

// Differentiable wrappers over kernels.hpp. Every function computes its output
// eagerly and records the backward rule on the operands' tape.

#include <cstddef>
#include <optional>

#include "lrfpn/kernels.hpp"
#include "lrfpn/tape.hpp"

namespace lrfpn::ops {

Var conv2d(Var input, Var kernel, std::optional<Var> bias, ConvSpec spec,
           ConvPath path = ConvPath::optimized);
Var depthwise_conv2d(Var input, Var kernel, std::size_t dilation, std::size_t padding);
Var adaptive_avg_pool(Var input, std::size_t out_h, std::size_t out_w);
Var adaptive_max_pool(Var input, std::size_t out_h, std::size_t out_w);
Var global_avg_pool(Var input);
Var global_max_pool(Var input);
Var fully_connected(Var input, Var weight, Var bias);
Var relu(Var x);
Var sigmoid(Var x);
Var upsample_nearest2x(Var input);
Var add(Var a, Var b);
Var hadamard(Var a, Var b);
Var broadcast_scale(Var x, Var s);
Var scale(Var x, double factor);
Var concat_channels(Var a, Var b);
/// Sum of all elements as a [1,1,1,1] node.
Var sum(Var x);
/// Mean binary cross-entropy against a fixed target, as a [1,1,1,1] node.
Var bce_loss(Var pred, const Tensor& target);

}  // namespace lrfpn::ops
