#pragma once

#include <cstdint>
#include <vector>

#include "lrfpn/config.hpp"
#include "lrfpn/metrics.hpp"

namespace lrfpn {

/// Trains one (flag set, seed) pair with train_toy and records the trace.
MetricsRecord run_training(const RunConfig& config, const FlagSet& set, std::uint64_t seed);

/// Runs every set x config.seeds pair on up to `jobs` worker threads. Each run
/// owns its model; results are returned sorted, so the output does not depend
/// on scheduling.
std::vector<MetricsRecord> run_ablation(const RunConfig& config, const std::vector<FlagSet>& sets,
                                        std::size_t jobs);

}  // namespace lrfpn
