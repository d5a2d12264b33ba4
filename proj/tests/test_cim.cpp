#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>

#include "lrfpn/cim.hpp"
#include "lrfpn/errors.hpp"
#include "lrfpn/kernels.hpp"
#include "lrfpn/ops.hpp"
#include "lrfpn/rng.hpp"

using namespace lrfpn;

namespace {

constexpr CimFlags kNone{false, false, false, false};
constexpr CimFlags kLocal{true, true, false, false};
constexpr CimFlags kNonLocal{true, false, true, false};
constexpr CimFlags kBoth{true, true, true, false};

void make_identity_proj(CimBlock& b) {
  b.proj_weight.value.fill(0.0);
  for (std::size_t i = 0; i < b.in_channels; ++i) b.proj_weight.value.at(i, i, 0, 0) = 1.0;
  b.proj_bias.value.fill(0.0);
}

void make_delta(Param& k) {
  k.value.fill(0.0);
  for (std::size_t c = 0; c < k.value.shape().n; ++c) k.value.at(c, 0, 1, 1) = 1.0;
}

Tensor branches(const Tensor& x, CimBlock& b, CimFlags f) {
  Tape t;
  return cim_branches(t.constant(x), b, f).value();
}

Tensor gate(const Tensor& x, CimBlock& b) {
  Tape t;
  return channel_gate(t.constant(x), b).value();
}

}  // namespace

TEST(ChannelGate, ZeroFc2GivesHalf) {
  Rng rng(1);
  CimBlock b = cim_init(6, 4, 2, 3);
  b.fc2_weight.value.fill(0.0);
  b.fc2_bias.value.fill(0.0);
  const Tensor x = random_tensor({2, 6, 5, 5}, rng);
  EXPECT_EQ(gate(x, b), Tensor(Shape{2, 6, 1, 1}, 0.5));
  Tape t;
  const Tensor y = channel_interaction(t.constant(x), b).value();
  EXPECT_LE(max_abs_diff(y, kernels::scale(x, 1.5)), 1e-15);
}

TEST(ChannelGate, ZeroInputGivesZero) {
  CimBlock b = cim_init(4, 4, 2, 9);
  Tape t;
  const Tensor y = channel_interaction(t.constant(Tensor(Shape{1, 4, 3, 3})), b).value();
  EXPECT_EQ(y, Tensor(Shape{1, 4, 3, 3}));
}

TEST(ChannelGate, ConstantChannelsCollapsePools) {
  Tensor x(Shape{1, 3, 4, 4});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 16; ++i) x[c * 16 + i] = 0.25 * (c + 1);
  EXPECT_EQ(kernels::adaptive_avg_pool(x, 1, 1), kernels::adaptive_max_pool(x, 1, 1).output);

  // With identical pooled statistics, splitting fc2 across the two halves
  // must not matter: s depends only on the channel means.
  CimBlock b = cim_init(3, 3, 1, 4);
  const Tensor s1 = gate(x, b);
  const std::size_t h = b.hidden;
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t j = 0; j < h; ++j) {
      const double total = b.fc2_weight.value[o * 2 * h + j] + b.fc2_weight.value[o * 2 * h + h + j];
      b.fc2_weight.value[o * 2 * h + j] = total;
      b.fc2_weight.value[o * 2 * h + h + j] = 0.0;
    }
  }
  EXPECT_LE(max_abs_diff(s1, gate(x, b)), 1e-15);
}

TEST(ChannelGate, StrictlyInsideUnitInterval) {
  Rng rng(2);
  CimBlock b = cim_init(8, 4, 4, 5);
  for (int t = 0; t < 200; ++t) {
    const double scale = t < 100 ? 5.0 : 1e4;  // the second half saturates the gate
    const Tensor s = gate(random_tensor({1, 8, 3, 3}, rng, -scale, scale), b);
    for (double v : s.data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Cim, AllOffIsProjection) {
  Rng rng(3);
  CimBlock b = cim_init(4, 6, 2, 1);
  const Tensor x = random_tensor({2, 4, 5, 5}, rng);
  for (ConvPath p : {ConvPath::naive, ConvPath::optimized}) {
    EXPECT_TRUE(bitwise_equal(cim_forward(x, b, kNone, p),
                              kernels::conv2d(x, b.proj_weight.value, &b.proj_bias.value, {1, 0}, p)));
  }
  CimBlock square = cim_init(4, 4, 2, 1);
  make_identity_proj(square);
  EXPECT_EQ(cim_forward(x, square, kNone), x);
}

TEST(Cim, DeltaKernelsActAsIdentity) {
  Rng rng(4);
  CimBlock b = cim_init(3, 3, 1, 2);
  make_identity_proj(b);
  make_delta(b.dw);
  make_delta(b.dwd);
  const Tensor x = random_tensor({1, 3, 6, 6}, rng);
  EXPECT_EQ(cim_forward(x, b, kLocal), x);
  EXPECT_EQ(branches(x, b, kBoth), kernels::scale(x, 2.0));
}

TEST(Cim, BranchesAreAdditive) {
  Rng rng(5);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CimBlock b = cim_init(5, 4, 2, seed);
    const Tensor x = random_tensor({2, 5, 7, 7}, rng);
    const Tensor sum = kernels::add(branches(x, b, kLocal), branches(x, b, kNonLocal));
    EXPECT_LE(max_abs_diff(branches(x, b, kBoth), sum), 1e-12);
  }
}

TEST(Cim, DilatedBranchReachesDistanceTwo) {
  Rng rng(6);
  CimBlock b = cim_init(2, 2, 1, 8);
  const Tensor x = random_tensor({1, 2, 9, 9}, rng);
  Tensor moved = x;
  moved.at(0, 0, 4 + 2, 4 - 2) += 1.0;  // Chebyshev distance 2 from (4, 4)
  auto centre_change = [&](CimFlags f) {
    return std::abs(branches(moved, b, f).at(0, 0, 4, 4) - branches(x, b, f).at(0, 0, 4, 4));
  };
  EXPECT_GT(centre_change(kNonLocal), 0.0);
  EXPECT_EQ(centre_change(kLocal), 0.0);
}

TEST(Cim, DeterministicInitAndCount) {
  CimBlock a = cim_init(16, 8, 4, 42), b = cim_init(16, 8, 4, 42);
  auto pa = a.params(), pb = b.params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(bitwise_equal(pa[i]->value, pb[i]->value));

  for (auto [c, d, r] : {std::array<std::size_t, 3>{16, 8, 4}, {3, 5, 4}, {7, 7, 2}}) {
    const CimBlock blk = cim_init(c, d, r, 0);
    const std::size_t h = std::max<std::size_t>(1, c / r);
    EXPECT_EQ(blk.hidden, h);
    EXPECT_EQ(blk.num_params(), 9 * c + 9 * c + h * c + h + c * 2 * h + c + d * c + d);
  }
}

TEST(Cim, RejectsZeroReduction) { EXPECT_THROW(cim_init(4, 4, 0, 0), ConfigError); }
