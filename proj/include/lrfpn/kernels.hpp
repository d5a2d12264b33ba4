#pragma once

// Primitive tensor kernels with explicit backward rules. These are the raw
// numerical routines; ops.hpp wraps them for recording on a Tape.

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "lrfpn/tensor.hpp"

namespace lrfpn {

enum class ConvPath { naive, optimized };

const char* to_string(ConvPath path);
ConvPath conv_path_from_string(const std::string& s);

struct ConvSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

namespace kernels {

/// Output dims of a convolution; throws ShapeError when the kernel does not fit
/// or channel counts disagree.
Shape conv2d_output_shape(const Shape& input, const Shape& kernel, ConvSpec spec);

/// kernel: [Cout, Cin, kh, kw]; bias: [Cout, 1, 1, 1] or absent.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias, ConvSpec spec,
              ConvPath path);
TensorF conv2d(const TensorF& input, const TensorF& kernel, const TensorF* bias, ConvSpec spec,
               ConvPath path);

struct Conv2dGrads {
  std::optional<Tensor> input;
  std::optional<Tensor> kernel;
  std::optional<Tensor> bias;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                            ConvSpec spec, ConvPath path, bool want_input, bool want_kernel,
                            bool want_bias);

/// kernel: [C, 1, k, k] with k odd; padding must equal dilation * (k - 1) / 2.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, std::size_t dilation,
                        std::size_t padding);
std::pair<Tensor, Tensor> depthwise_conv2d_backward(const Tensor& input, const Tensor& kernel,
                                                    const Tensor& grad_out, std::size_t dilation,
                                                    std::size_t padding);

/// Half-open row (or column) range [begin, end) pooled into output cell `index`.
/// begin = floor(index * in / out), end = ceil((index + 1) * in / out).
std::pair<std::size_t, std::size_t> pool_window(std::size_t index, std::size_t in, std::size_t out);

Tensor adaptive_avg_pool(const Tensor& input, std::size_t out_h, std::size_t out_w);
Tensor adaptive_avg_pool_backward(const Shape& input, const Tensor& grad_out);

struct MaxPoolResult {
  Tensor output;
  /// Flat input offset of the selected element for every output cell.
  std::vector<std::size_t> argmax;
};
/// Ties resolve to the lowest flat index.
MaxPoolResult adaptive_max_pool(const Tensor& input, std::size_t out_h, std::size_t out_w);
Tensor adaptive_max_pool_backward(const Shape& input, const std::vector<std::size_t>& argmax,
                                  const Tensor& grad_out);

/// input [N, Cin, 1, 1]; weight [Cout, Cin, 1, 1]; bias [Cout, 1, 1, 1].
Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor upsample_nearest2x(const Tensor& input);
Tensor upsample_nearest2x_backward(const Tensor& grad_out);

Tensor relu(const Tensor& x);
/// Logistic function kept strictly inside (0, 1): results are clamped to
/// [denorm_min, 1 - 2^-53] so saturated inputs never round onto the boundary.
Tensor sigmoid(const Tensor& x);
double sigmoid(double x);

Tensor add(const Tensor& a, const Tensor& b);
/// b may have batch 1, in which case it is broadcast across a's batch.
Tensor hadamard(const Tensor& a, const Tensor& b);
/// s: [N, C, 1, 1] broadcast over the spatial dims of x.
Tensor broadcast_scale(const Tensor& x, const Tensor& s);
Tensor scale(const Tensor& x, double factor);
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Mean binary cross-entropy; pred must lie strictly inside (0, 1).
double bce_loss(const Tensor& pred, const Tensor& target);

}  // namespace kernels
}  // namespace lrfpn
