#include "lrfpn/optim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "lrfpn/rng.hpp"

namespace lrfpn {

void sgd_step(std::span<Param* const> params, const SgdOptions& o) {
  if (!(o.lr > 0.0)) throw ConfigError(fmt::format("sgd_step: lr must be positive, got {}", o.lr));
  if (!(o.momentum >= 0.0 && o.momentum < 1.0)) {
    throw ConfigError(fmt::format("sgd_step: momentum must be in [0, 1), got {}", o.momentum));
  }
  for (Param* p : params) {
    Tensor& w = p->value;
    Tensor& g = p->grad;
    Tensor& v = p->momentum;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double grad = o.weight_decay == 0.0 ? g[i] : g[i] + o.weight_decay * w[i];
      v[i] = o.momentum * v[i] + grad;
      w[i] -= o.lr * v[i];
    }
    p->zero_grad();
  }
}

void he_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
}

}  // namespace lrfpn
