#pragma once

// Dense 2-D convolution in two interchangeable forms. The naive form is a
// direct loop nest and serves as the reference; the optimized form lowers each
// batch element to im2col + blocked GEMM. Both are templated on the scalar
// type so the benchmark can run in f32.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace lrfpn::detail {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
  bool pointwise() const {
    return kernel_h == 1 && kernel_w == 1 && stride == 1 && padding == 0;
  }
};

inline constexpr std::size_t kBlockM = 32;
inline constexpr std::size_t kBlockN = 256;
inline constexpr std::size_t kBlockK = 64;

/// C[m x n] += A[m x k] * B[k x n], all row-major.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i0 = 0; i0 < m; i0 += kBlockM) {
    const std::size_t i1 = std::min(m, i0 + kBlockM);
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t p1 = std::min(k, p0 + kBlockK);
      for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
        const std::size_t j1 = std::min(n, j0 + kBlockN);
        std::size_t i = i0;
        // Four rows of C per pass share each load of B.
        for (; i + 4 <= i1; i += 4) {
          T* c0 = c + i * n;
          T* c1 = c0 + n;
          T* c2 = c1 + n;
          T* c3 = c2 + n;
          for (std::size_t p = p0; p < p1; ++p) {
            const T a0 = a[i * k + p], a1 = a[(i + 1) * k + p];
            const T a2 = a[(i + 2) * k + p], a3 = a[(i + 3) * k + p];
            const T* brow = b + p * n;
            for (std::size_t j = j0; j < j1; ++j) {
              const T bv = brow[j];
              c0[j] += a0 * bv;
              c1[j] += a1 * bv;
              c2[j] += a2 * bv;
              c3[j] += a3 * bv;
            }
          }
        }
        for (; i < i1; ++i) {
          T* crow = c + i * n;
          for (std::size_t p = p0; p < p1; ++p) {
            const T av = a[i * k + p];
            const T* brow = b + p * n;
            for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
          }
        }
      }
    }
  }
}

/// C[m x n] += A[k x m]^T * B[k x n].
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i0 = 0; i0 < m; i0 += kBlockM) {
    const std::size_t i1 = std::min(m, i0 + kBlockM);
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t p1 = std::min(k, p0 + kBlockK);
      for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
        const std::size_t j1 = std::min(n, j0 + kBlockN);
        for (std::size_t p = p0; p < p1; ++p) {
          const T* brow = b + p * n;
          for (std::size_t i = i0; i < i1; ++i) {
            const T av = a[p * m + i];
            T* crow = c + i * n;
            for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
          }
        }
      }
    }
  }
}

/// C[m x n] += A[m x k] * B[n x k]^T.
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

/// Unfolds one image [C,H,W] into columns [C*kh*kw, OH*OW].
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* cols) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        T* row = cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(y * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
          T* out = row + y * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(out, out + ow, T{0});
            continue;
          }
          const T* in = image + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t x = 0; x < ow; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            out[x] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w))
                         ? T{0}
                         : in[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

/// Scatter-adds columns back onto one image; the adjoint of im2col.
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* image) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const T* row = cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(y * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* in = image + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t x = 0; x < ow; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) {
              in[static_cast<std::size_t>(ix)] += row[y * ow + x];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward_naive(const ConvGeometry& g, std::span<const T> x, std::span<const T> k,
                        std::span<const T> bias, std::span<T> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xo = 0; xo < ow; ++xo) {
          T acc = bias.empty() ? T{0} : bias[co];
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) -
                                        static_cast<std::ptrdiff_t>(g.padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xo * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                acc += x[((n * g.in_channels + ci) * g.in_h + static_cast<std::size_t>(iy)) *
                             g.in_w +
                         static_cast<std::size_t>(ix)] *
                       k[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
              }
            }
          }
          out[((n * g.out_channels + co) * oh + y) * ow + xo] = acc;
        }
      }
    }
  }
}

/// Accumulates into whichever of grad_x / grad_k / grad_bias are non-empty.
template <typename T>
void conv_backward_naive(const ConvGeometry& g, std::span<const T> x, std::span<const T> k,
                         std::span<const T> grad_out, std::span<T> grad_x, std::span<T> grad_k,
                         std::span<T> grad_bias) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xo = 0; xo < ow; ++xo) {
          const T go = grad_out[((n * g.out_channels + co) * oh + y) * ow + xo];
          if (!grad_bias.empty()) grad_bias[co] += go;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) -
                                        static_cast<std::ptrdiff_t>(g.padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xo * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                const std::size_t xi =
                    ((n * g.in_channels + ci) * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                    static_cast<std::size_t>(ix);
                const std::size_t ki = ((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx;
                if (!grad_x.empty()) grad_x[xi] += go * k[ki];
                if (!grad_k.empty()) grad_k[ki] += go * x[xi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward_im2col(const ConvGeometry& g, std::span<const T> x, std::span<const T> k,
                         std::span<const T> bias, std::span<T> out) {
  const std::size_t pixels = g.out_h() * g.out_w();
  const std::size_t patch = g.patch();
  std::vector<T> cols(g.pointwise() ? 0 : patch * pixels);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* image = x.data() + n * g.in_channels * g.in_h * g.in_w;
    const T* b = image;
    if (!g.pointwise()) {
      im2col(g, image, cols.data());
      b = cols.data();
    }
    T* dst = out.data() + n * g.out_channels * pixels;
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      std::fill(dst + co * pixels, dst + (co + 1) * pixels, bias.empty() ? T{0} : bias[co]);
    }
    gemm_nn(g.out_channels, pixels, patch, k.data(), b, dst);
  }
}

template <typename T>
void conv_backward_im2col(const ConvGeometry& g, std::span<const T> x, std::span<const T> k,
                          std::span<const T> grad_out, std::span<T> grad_x, std::span<T> grad_k,
                          std::span<T> grad_bias) {
  const std::size_t pixels = g.out_h() * g.out_w();
  const std::size_t patch = g.patch();
  const std::size_t image_size = g.in_channels * g.in_h * g.in_w;
  std::vector<T> cols(g.pointwise() ? 0 : patch * pixels);
  std::vector<T> grad_cols(grad_x.empty() ? 0 : patch * pixels);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* go = grad_out.data() + n * g.out_channels * pixels;
    if (!grad_bias.empty()) {
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        T acc{0};
        for (std::size_t p = 0; p < pixels; ++p) acc += go[co * pixels + p];
        grad_bias[co] += acc;
      }
    }
    if (!grad_k.empty()) {
      const T* image = x.data() + n * image_size;
      const T* b = image;
      if (!g.pointwise()) {
        im2col(g, image, cols.data());
        b = cols.data();
      }
      gemm_nt(g.out_channels, patch, pixels, go, b, grad_k.data());
    }
    if (!grad_x.empty()) {
      T* gx = grad_x.data() + n * image_size;
      if (g.pointwise()) {
        gemm_tn(patch, pixels, g.out_channels, k.data(), go, gx);
      } else {
        std::fill(grad_cols.begin(), grad_cols.end(), T{0});
        gemm_tn(patch, pixels, g.out_channels, k.data(), go, grad_cols.data());
        col2im(g, grad_cols.data(), gx);
      }
    }
  }
}

}  // namespace lrfpn::detail
