#pragma once

#include <span>

#include "lrfpn/tape.hpp"

namespace lrfpn {

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
  /// Added to the loss gradient as weight_decay * w before the momentum update.
  double weight_decay = 0.0;

  friend bool operator==(const SgdOptions&, const SgdOptions&) = default;
};

/// v <- momentum * v + (grad + weight_decay * w); w <- w - lr * v; grad <- 0.
void sgd_step(std::span<Param* const> params, const SgdOptions& options);

/// He-uniform initialisation: U(-b, b) with b = sqrt(6 / fan_in).
class Rng;
void he_uniform(Tensor& t, std::size_t fan_in, Rng& rng);

}  // namespace lrfpn
