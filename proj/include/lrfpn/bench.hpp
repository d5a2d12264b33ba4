#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrfpn/pyramid.hpp"

namespace lrfpn {

struct BenchOptions {
  ModelConfig model;
  std::size_t batch = 4;
  std::size_t reps = 10;
  std::size_t warmup = 3;
  DType dtype = DType::f64;
  std::uint64_t seed = 0;
};

struct KernelTiming {
  std::string name;
  std::string dtype;
  std::string input;   ///< input dims
  std::string output;  ///< output dims
  double naive_ms = 0.0;     ///< median over reps
  double optimized_ms = 0.0;
  double speedup = 0.0;      ///< naive_ms / optimized_ms
  double max_abs_diff = 0.0; ///< guard: naive vs optimized outputs
  double tolerance = 0.0;
};

struct BenchReport {
  BenchOptions options;
  std::vector<KernelTiming> kernels;
  /// Speedup of the full LR-FPN forward pass at the configured size.
  double speedup = 0.0;

  std::string json() const;
};

/// Median of `samples`; the benchmark calls it on post-warmup timings only.
double median_ms(std::vector<double> samples);

/// Verifies naive and optimized outputs agree before timing each kernel;
/// throws std::runtime_error if a guard fails.
BenchReport run_bench(const BenchOptions& options);

}  // namespace lrfpn
