#include "lrfpn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "lrfpn/kernels.hpp"
#include "lrfpn/rng.hpp"

namespace lrfpn {
namespace oracle {
namespace {

bool in_window(std::size_t r, std::size_t a, std::size_t in, std::size_t out) {
  return (r + 1) * out > a * in && r * out < (a + 1) * in;
}

template <typename Reduce>
Tensor brute_force_pool(const Tensor& input, std::size_t out_h, std::size_t out_w, double init, Reduce reduce,
                        bool average) {
  const Shape& s = input.shape();
  Tensor out(Shape{s.n, s.c, out_h, out_w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t a = 0; a < out_h; ++a) {
        for (std::size_t b = 0; b < out_w; ++b) {
          double acc = init;
          std::size_t count = 0;
          for (std::size_t y = 0; y < s.h; ++y) {
            if (!in_window(y, a, s.h, out_h)) continue;
            for (std::size_t x = 0; x < s.w; ++x) {
              if (!in_window(x, b, s.w, out_w)) continue;
              acc = reduce(acc, input.at(n, c, y, x));
              ++count;
            }
          }
          out.at(n, c, a, b) = average ? acc / static_cast<double>(count) : acc;
        }
      }
    }
  }
  return out;
}

}  // namespace

Tensor brute_force_avg_pool(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  return brute_force_pool(input, out_h, out_w, 0.0, [](double a, double v) { return a + v; }, true);
}

Tensor brute_force_max_pool(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  return brute_force_pool(input, out_h, out_w, -std::numeric_limits<double>::infinity(),
                          [](double a, double v) { return std::max(a, v); }, false);
}

Tensor dense_depthwise_kernel(const Tensor& kernel, std::size_t dilation) {
  const std::size_t c = kernel.shape().n, k = kernel.shape().h;
  const std::size_t span = dilation * (k - 1) + 1;
  Tensor dense(Shape{c, c, span, span});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < k; ++y) {
      for (std::size_t x = 0; x < k; ++x) dense.at(ch, ch, y * dilation, x * dilation) = kernel.at(ch, 0, y, x);
    }
  }
  return dense;
}

}  // namespace oracle

bool OracleReport::pass() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const OracleCheck& c) { return c.pass(); });
}

std::string OracleReport::text() const {
  std::string out = fmt::format("{:<40} {:>6} {:>14} {:>10}  status\n", "check", "cases", "max_abs_err", "tolerance");
  for (const OracleCheck& c : checks) {
    out += fmt::format("{:<40} {:>6} {:>14.3e} {:>10.1e}  {}\n", c.name, c.cases, c.max_abs_error, c.tolerance,
                       c.pass() ? "ok" : "FAIL");
  }
  out += fmt::format("result: {}\n", pass() ? "PASS" : "FAIL");
  return out;
}

OracleReport run_oracle(std::size_t cases, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x0ac1e));
  auto dim = [&rng](std::size_t lo, std::size_t hi) { return static_cast<std::size_t>(rng.integer(lo, hi)); };

  OracleCheck conv_fwd{"conv2d optimized vs naive (forward)", 0, 0.0, 1e-10};
  OracleCheck conv_bwd{"conv2d optimized vs naive (backward)", 0, 0.0, 1e-10};
  OracleCheck avg{"adaptive_avg_pool vs window enumeration", 0, 0.0, 1e-12};
  OracleCheck max{"adaptive_max_pool vs window enumeration", 0, 0.0, 0.0};
  OracleCheck dw{"depthwise_conv2d vs dense conv", 0, 0.0, 1e-10};

  for (std::size_t t = 0; t < cases; ++t) {
    const std::size_t k = dim(1, 5);
    const std::size_t pad = dim(0, 2);
    const std::size_t stride = dim(1, 3);
    // Keep the padded input at least as large as the kernel.
    const std::size_t h = std::max(dim(1, 8), k > 2 * pad ? k - 2 * pad : 1);
    const std::size_t w = std::max(dim(1, 8), k > 2 * pad ? k - 2 * pad : 1);
    const Tensor x = random_tensor({dim(1, 3), dim(1, 8), h, w}, rng);
    const Tensor kern = random_tensor({dim(1, 8), x.shape().c, k, k}, rng);
    const Tensor bias = random_tensor({kern.shape().n, 1, 1, 1}, rng);
    const ConvSpec spec{stride, pad};
    const Tensor* b = rng.integer(0, 1) == 1 ? &bias : nullptr;
    const Tensor a = kernels::conv2d(x, kern, b, spec, ConvPath::naive);
    const Tensor o = kernels::conv2d(x, kern, b, spec, ConvPath::optimized);
    conv_fwd.max_abs_error = std::max(conv_fwd.max_abs_error, max_abs_diff(a, o));
    ++conv_fwd.cases;

    const Tensor g = random_tensor(a.shape(), rng);
    auto gn = kernels::conv2d_backward(x, kern, g, spec, ConvPath::naive, true, true, true);
    auto go = kernels::conv2d_backward(x, kern, g, spec, ConvPath::optimized, true, true, true);
    conv_bwd.max_abs_error = std::max({conv_bwd.max_abs_error, max_abs_diff(*gn.input, *go.input),
                                       max_abs_diff(*gn.kernel, *go.kernel), max_abs_diff(*gn.bias, *go.bias)});
    ++conv_bwd.cases;

    const Tensor p = random_tensor({dim(1, 3), dim(1, 4), dim(1, 8), dim(1, 8)}, rng);
    const std::size_t oh = dim(1, p.shape().h), ow = dim(1, p.shape().w);
    avg.max_abs_error = std::max(avg.max_abs_error, max_abs_diff(kernels::adaptive_avg_pool(p, oh, ow),
                                                                 oracle::brute_force_avg_pool(p, oh, ow)));
    ++avg.cases;
    max.max_abs_error = std::max(max.max_abs_error, max_abs_diff(kernels::adaptive_max_pool(p, oh, ow).output,
                                                                 oracle::brute_force_max_pool(p, oh, ow)));
    ++max.cases;

    const std::size_t dil = dim(1, 3);
    const Tensor dk = random_tensor({p.shape().c, 1, 3, 3}, rng);
    const Tensor dense = oracle::dense_depthwise_kernel(dk, dil);
    dw.max_abs_error =
        std::max(dw.max_abs_error, max_abs_diff(kernels::depthwise_conv2d(p, dk, dil, dil),
                                                kernels::conv2d(p, dense, nullptr, ConvSpec{1, dil}, ConvPath::naive)));
    ++dw.cases;
  }
  return {{conv_fwd, conv_bwd, avg, max, dw}};
}

}  // namespace lrfpn
