#pragma once

// Cross-checks between independent computations of the same quantity:
//   optimized (im2col + GEMM) conv  vs  direct-loop conv, forward and backward
//   adaptive pooling                vs  brute-force window enumeration
//   depthwise conv                  vs  dense conv with a block-diagonal kernel

#include <cstdint>
#include <string>
#include <vector>

#include "lrfpn/tensor.hpp"

namespace lrfpn {

namespace oracle {

/// Pools by testing every input element for membership in every output
/// window with integer arithmetic: row r is in window a iff
/// (r + 1) * out > a * in and r * out < (a + 1) * in.
Tensor brute_force_avg_pool(const Tensor& input, std::size_t out_h, std::size_t out_w);
Tensor brute_force_max_pool(const Tensor& input, std::size_t out_h, std::size_t out_w);

/// Expands a [C,1,k,k] depthwise kernel with dilation into an equivalent dense
/// [C, C, k', k'] kernel (k' = dilation * (k - 1) + 1).
Tensor dense_depthwise_kernel(const Tensor& kernel, std::size_t dilation);

}  // namespace oracle

struct OracleCheck {
  std::string name;
  std::size_t cases = 0;
  double max_abs_error = 0.0;
  double tolerance = 0.0;

  bool pass() const { return cases > 0 && max_abs_error <= tolerance; }
};

struct OracleReport {
  std::vector<OracleCheck> checks;
  bool pass() const;
  std::string text() const;
};

/// `cases` random shapes per check, every dim <= 8.
OracleReport run_oracle(std::size_t cases, std::uint64_t seed);

}  // namespace lrfpn
