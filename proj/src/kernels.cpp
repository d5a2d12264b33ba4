#include "lrfpn/kernels.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "lrfpn/conv_impl.hpp"

namespace lrfpn {

const char* to_string(ConvPath path) {
  return path == ConvPath::naive ? "naive" : "optimized";
}

ConvPath conv_path_from_string(const std::string& s) {
  if (s == "naive") return ConvPath::naive;
  if (s == "optimized") return ConvPath::optimized;
  throw ConfigError("unknown conv path '" + s + "' (expected naive or optimized)");
}

namespace kernels {
namespace {

detail::ConvGeometry geometry(const Shape& input, const Shape& kernel, ConvSpec spec) {
  detail::ConvGeometry g;
  g.batch = input.n;
  g.in_channels = input.c;
  g.in_h = input.h;
  g.in_w = input.w;
  g.out_channels = kernel.n;
  g.kernel_h = kernel.h;
  g.kernel_w = kernel.w;
  g.stride = spec.stride;
  g.padding = spec.padding;
  return g;
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(fmt::format("{}: operand dims differ, {} vs {}", op, a.str(), b.str()));
}

template <typename T>
BasicTensor<T> conv2d_impl(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                           const BasicTensor<T>* bias, ConvSpec spec, ConvPath path) {
  const Shape out_shape = conv2d_output_shape(input.shape(), kernel.shape(), spec);
  if (bias != nullptr && bias->size() != kernel.shape().n) {
    throw ShapeError(fmt::format("conv2d: bias {} does not match {} output channels",
                                 bias->shape().str(), kernel.shape().n));
  }
  BasicTensor<T> out(out_shape);
  const auto g = geometry(input.shape(), kernel.shape(), spec);
  std::span<const T> b = bias ? bias->data() : std::span<const T>{};
  if (path == ConvPath::naive) {
    detail::conv_forward_naive<T>(g, input.data(), kernel.data(), b, out.data());
  } else {
    detail::conv_forward_im2col<T>(g, input.data(), kernel.data(), b, out.data());
  }
  return out;
}

}  // namespace

Shape conv2d_output_shape(const Shape& input, const Shape& kernel, ConvSpec spec) {
  if (kernel.c != input.c) {
    throw ShapeError(fmt::format("conv2d: input {} has {} channels but kernel {} expects {}",
                                 input.str(), input.c, kernel.str(), kernel.c));
  }
  if (spec.stride == 0) throw ConfigError("conv2d: stride must be positive");
  if (input.h + 2 * spec.padding < kernel.h || input.w + 2 * spec.padding < kernel.w) {
    throw ShapeError(fmt::format("conv2d: kernel {} larger than padded input {} (padding {})",
                                 kernel.str(), input.str(), spec.padding));
  }
  return {input.n, kernel.n, (input.h + 2 * spec.padding - kernel.h) / spec.stride + 1,
          (input.w + 2 * spec.padding - kernel.w) / spec.stride + 1};
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias, ConvSpec spec,
              ConvPath path) {
  return conv2d_impl(input, kernel, bias, spec, path);
}

TensorF conv2d(const TensorF& input, const TensorF& kernel, const TensorF* bias, ConvSpec spec,
               ConvPath path) {
  return conv2d_impl(input, kernel, bias, spec, path);
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                            ConvSpec spec, ConvPath path, bool want_input, bool want_kernel,
                            bool want_bias) {
  require_same(conv2d_output_shape(input.shape(), kernel.shape(), spec), grad_out.shape(),
               "conv2d_backward");
  Conv2dGrads grads;
  if (want_input) grads.input.emplace(input.shape());
  if (want_kernel) grads.kernel.emplace(kernel.shape());
  if (want_bias) grads.bias.emplace(Shape{kernel.shape().n, 1, 1, 1});
  auto span_of = [](std::optional<Tensor>& t) {
    return t ? t->data() : std::span<double>{};
  };
  const auto g = geometry(input.shape(), kernel.shape(), spec);
  if (path == ConvPath::naive) {
    detail::conv_backward_naive<double>(g, input.data(), kernel.data(), grad_out.data(),
                                        span_of(grads.input), span_of(grads.kernel),
                                        span_of(grads.bias));
  } else {
    detail::conv_backward_im2col<double>(g, input.data(), kernel.data(), grad_out.data(),
                                         span_of(grads.input), span_of(grads.kernel),
                                         span_of(grads.bias));
  }
  return grads;
}

namespace {

void check_depthwise(const Shape& input, const Shape& kernel, std::size_t dilation,
                     std::size_t padding) {
  if (kernel.h != kernel.w || kernel.h % 2 == 0) {
    throw ConfigError(fmt::format(
        "depthwise_conv2d: kernel {} must be square with odd size to preserve spatial dims",
        kernel.str()));
  }
  if (dilation == 0) throw ConfigError("depthwise_conv2d: dilation must be positive");
  if (padding != dilation * (kernel.h - 1) / 2) {
    throw ConfigError(fmt::format("depthwise_conv2d: padding {} must equal dilation*(k-1)/2 = {}",
                                  padding, dilation * (kernel.h - 1) / 2));
  }
  if (kernel.n != input.c || kernel.c != 1) {
    throw ShapeError(fmt::format("depthwise_conv2d: kernel {} does not match input {} channels",
                                 kernel.str(), input.str()));
  }
}

// Valid output range [lo, hi) for a tap whose input offset is `shift`.
std::pair<std::size_t, std::size_t> tap_range(std::ptrdiff_t shift, std::size_t extent) {
  const auto n = static_cast<std::ptrdiff_t>(extent);
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - shift);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, std::size_t dilation,
                        std::size_t padding) {
  const Shape& s = input.shape();
  check_depthwise(s, kernel.shape(), dilation, padding);
  const std::size_t k = kernel.shape().h;
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const double* in = input.data().data() + input.offset(n, c, 0, 0);
      double* dst = out.data().data() + out.offset(n, c, 0, 0);
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto dy = static_cast<std::ptrdiff_t>(ky * dilation) - static_cast<std::ptrdiff_t>(padding);
        const auto [y0, y1] = tap_range(dy, s.h);
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto dx = static_cast<std::ptrdiff_t>(kx * dilation) - static_cast<std::ptrdiff_t>(padding);
          const auto [x0, x1] = tap_range(dx, s.w);
          const double wv = kernel.at(c, 0, ky, kx);
          for (std::size_t y = y0; y < y1; ++y) {
            const double* src = in + (static_cast<std::ptrdiff_t>(y) + dy) * static_cast<std::ptrdiff_t>(s.w) + dx;
            double* row = dst + y * s.w;
            for (std::size_t x = x0; x < x1; ++x) row[x] += wv * src[x];
          }
        }
      }
    }
  }
  return out;
}

std::pair<Tensor, Tensor> depthwise_conv2d_backward(const Tensor& input, const Tensor& kernel,
                                                    const Tensor& grad_out, std::size_t dilation,
                                                    std::size_t padding) {
  const Shape& s = input.shape();
  check_depthwise(s, kernel.shape(), dilation, padding);
  require_same(s, grad_out.shape(), "depthwise_conv2d_backward");
  const std::size_t k = kernel.shape().h;
  Tensor grad_in(s);
  Tensor grad_k(kernel.shape());
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const double* in = input.data().data() + input.offset(n, c, 0, 0);
      const double* go = grad_out.data().data() + grad_out.offset(n, c, 0, 0);
      double* gi = grad_in.data().data() + grad_in.offset(n, c, 0, 0);
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto dy = static_cast<std::ptrdiff_t>(ky * dilation) - static_cast<std::ptrdiff_t>(padding);
        const auto [y0, y1] = tap_range(dy, s.h);
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto dx = static_cast<std::ptrdiff_t>(kx * dilation) - static_cast<std::ptrdiff_t>(padding);
          const auto [x0, x1] = tap_range(dx, s.w);
          const double wv = kernel.at(c, 0, ky, kx);
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const std::ptrdiff_t base = (static_cast<std::ptrdiff_t>(y) + dy) * static_cast<std::ptrdiff_t>(s.w) + dx;
            const double* src = in + base;
            double* gsrc = gi + base;
            const double* grow = go + y * s.w;
            for (std::size_t x = x0; x < x1; ++x) {
              acc += grow[x] * src[x];
              gsrc[x] += wv * grow[x];
            }
          }
          grad_k.at(c, 0, ky, kx) += acc;
        }
      }
    }
  }
  return {std::move(grad_in), std::move(grad_k)};
}

std::pair<std::size_t, std::size_t> pool_window(std::size_t index, std::size_t in, std::size_t out) {
  return {(index * in) / out, ((index + 1) * in + out - 1) / out};
}

namespace {

void check_pool(const Shape& s, std::size_t out_h, std::size_t out_w, const char* op) {
  if (out_h == 0 || out_w == 0 || out_h > s.h || out_w > s.w) {
    throw ConfigError(fmt::format("{}: output size {}x{} must be positive and within input {}", op,
                                  out_h, out_w, s.str()));
  }
}

}  // namespace

Tensor adaptive_avg_pool(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  const Shape& s = input.shape();
  check_pool(s, out_h, out_w, "adaptive_avg_pool");
  Tensor out(Shape{s.n, s.c, out_h, out_w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t a = 0; a < out_h; ++a) {
        const auto [y0, y1] = pool_window(a, s.h, out_h);
        for (std::size_t b = 0; b < out_w; ++b) {
          const auto [x0, x1] = pool_window(b, s.w, out_w);
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) acc += input.at(n, c, y, x);
          }
          out.at(n, c, a, b) = acc / static_cast<double>((y1 - y0) * (x1 - x0));
        }
      }
    }
  }
  return out;
}

Tensor adaptive_avg_pool_backward(const Shape& s, const Tensor& grad_out) {
  const std::size_t out_h = grad_out.shape().h, out_w = grad_out.shape().w;
  check_pool(s, out_h, out_w, "adaptive_avg_pool_backward");
  Tensor grad(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t a = 0; a < out_h; ++a) {
        const auto [y0, y1] = pool_window(a, s.h, out_h);
        for (std::size_t b = 0; b < out_w; ++b) {
          const auto [x0, x1] = pool_window(b, s.w, out_w);
          const double g = grad_out.at(n, c, a, b) / static_cast<double>((y1 - y0) * (x1 - x0));
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) grad.at(n, c, y, x) += g;
          }
        }
      }
    }
  }
  return grad;
}

MaxPoolResult adaptive_max_pool(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  const Shape& s = input.shape();
  check_pool(s, out_h, out_w, "adaptive_max_pool");
  MaxPoolResult r{Tensor(Shape{s.n, s.c, out_h, out_w}), {}};
  r.argmax.resize(r.output.size());
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t a = 0; a < out_h; ++a) {
        const auto [y0, y1] = pool_window(a, s.h, out_h);
        for (std::size_t b = 0; b < out_w; ++b) {
          const auto [x0, x1] = pool_window(b, s.w, out_w);
          std::size_t best = input.offset(n, c, y0, x0);
          // Row-major scan with strict '>' keeps the lowest flat index on ties.
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) {
              const std::size_t i = input.offset(n, c, y, x);
              if (input[i] > input[best]) best = i;
            }
          }
          const std::size_t o = r.output.offset(n, c, a, b);
          r.output[o] = input[best];
          r.argmax[o] = best;
        }
      }
    }
  }
  return r;
}

Tensor adaptive_max_pool_backward(const Shape& s, const std::vector<std::size_t>& argmax,
                                  const Tensor& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("adaptive_max_pool_backward: argmax size does not match grad_out");
  }
  Tensor grad(s);
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad[argmax[i]] += grad_out[i];
  return grad;
}

Tensor fully_connected(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const Shape& s = input.shape();
  if (s.h != 1 || s.w != 1) {
    throw ShapeError("fully_connected: input must have 1x1 spatial dims, got " + s.str());
  }
  const Shape& ws = weight.shape();
  if (ws.c != s.c || ws.h != 1 || ws.w != 1) {
    throw ShapeError(fmt::format("fully_connected: weight {} does not accept input {}", ws.str(), s.str()));
  }
  if (bias.size() != ws.n) {
    throw ShapeError(fmt::format("fully_connected: bias {} does not match weight {}",
                                 bias.shape().str(), ws.str()));
  }
  Tensor out(Shape{s.n, ws.n, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t o = 0; o < ws.n; ++o) {
      double acc = bias[o];
      for (std::size_t i = 0; i < s.c; ++i) acc += weight[o * s.c + i] * input[n * s.c + i];
      out[n * ws.n + o] = acc;
    }
  }
  return out;
}

Tensor upsample_nearest2x(const Tensor& input) {
  const Shape& s = input.shape();
  Tensor out(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < 2 * s.h; ++y) {
        for (std::size_t x = 0; x < 2 * s.w; ++x) out.at(n, c, y, x) = input.at(n, c, y / 2, x / 2);
      }
    }
  }
  return out;
}

Tensor upsample_nearest2x_backward(const Tensor& grad_out) {
  const Shape& g = grad_out.shape();
  if (g.h % 2 != 0 || g.w % 2 != 0) {
    throw ShapeError("upsample_nearest2x_backward: odd gradient dims " + g.str());
  }
  Tensor grad(Shape{g.n, g.c, g.h / 2, g.w / 2});
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t c = 0; c < g.c; ++c) {
      for (std::size_t y = 0; y < g.h; ++y) {
        for (std::size_t x = 0; x < g.w; ++x) grad.at(n, c, y / 2, x / 2) += grad_out.at(n, c, y, x);
      }
    }
  }
  return grad;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

double sigmoid(double x) {
  // Rounding would otherwise return exactly 1 for x > ~36.7 and 0 for x < ~-745.
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  constexpr double hi = 1.0 - 0x1.0p-53;
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return s < lo ? lo : (s > hi ? hi : s);  // NaN passes through
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb == sa) {
    Tensor out(sa);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
  }
  if (sb.n != 1 || sb.c != sa.c || sb.h != sa.h || sb.w != sa.w) {
    throw ShapeError(fmt::format("hadamard: {} cannot be broadcast against {}", sb.str(), sa.str()));
  }
  Tensor out(sa);
  const std::size_t per = b.size();
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i % per];
  return out;
}

Tensor broadcast_scale(const Tensor& x, const Tensor& s) {
  const Shape& sx = x.shape();
  if (s.shape() != Shape{sx.n, sx.c, 1, 1}) {
    throw ShapeError(fmt::format("broadcast_scale: scale {} does not match {}", s.shape().str(), sx.str()));
  }
  Tensor out(sx);
  const std::size_t plane = sx.plane();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s[i / plane];
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError(fmt::format("concat_channels: {} vs {}", sa.str(), sb.str()));
  }
  Tensor out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = sa.c * sa.plane(), pb = sb.c * sb.plane();
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.data().begin() + n * pa, pa, out.data().begin() + n * (pa + pb));
    std::copy_n(b.data().begin() + n * pb, pb, out.data().begin() + n * (pa + pb) + pa);
  }
  return out;
}

double bce_loss(const Tensor& pred, const Tensor& target) {
  require_same(pred.shape(), target.shape(), "bce_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    if (!(p > 0.0 && p < 1.0)) {
      throw std::domain_error(fmt::format("bce_loss: prediction {} outside (0, 1)", p));
    }
    const double y = target[i];
    acc -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace kernels
}  // namespace lrfpn
