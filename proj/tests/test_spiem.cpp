#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "lrfpn/errors.hpp"
#include "lrfpn/kernels.hpp"
#include "lrfpn/oracle.hpp"
#include "lrfpn/rng.hpp"
#include "lrfpn/spiem.hpp"

using namespace lrfpn;

namespace {

SpiemLevel identity_level(std::size_t c, std::size_t h, std::size_t w) {
  SpiemLevel l = spiem_init(c, {{c, h, w}}, 0).front();
  l.proj_weight.value.fill(0.0);
  for (std::size_t i = 0; i < c; ++i) l.proj_weight.value.at(i, i, 0, 0) = 1.0;
  return l;
}

}  // namespace

TEST(Spiem, ZeroWeightsGiveZero) {
  Rng rng(1);
  SpiemLevel l = spiem_init(3, {{5, 2, 2}}, 7).front();
  l.wbar.value.fill(0.0);
  l.wtilde.value.fill(0.0);
  const Tensor out = spiem_forward(random_tensor({2, 3, 8, 8}, rng), l, {true, true});
  EXPECT_EQ(out, Tensor(Shape{2, 5, 2, 2}));
}

TEST(Spiem, ConstantInputDoubles) {
  Tensor f1(Shape{1, 3, 8, 8});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 64; ++i) f1[c * 64 + i] = 0.5 + c;
  SpiemLevel l = identity_level(3, 4, 4);
  const Tensor out = spiem_forward(f1, l, {true, true});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(out[c * 16 + i], 2.0 * (0.5 + c));
}

TEST(Spiem, RampPooledSum) {
  Tensor f1(Shape{1, 1, 4, 4});
  std::iota(f1.data().begin(), f1.data().end(), 0.0);
  const Tensor pooled = kernels::add(oracle::brute_force_avg_pool(f1, 2, 2), oracle::brute_force_max_pool(f1, 2, 2));
  EXPECT_EQ(pooled, Tensor(Shape{1, 1, 2, 2}, {7.5, 11.5, 23.5, 27.5}));
  SpiemLevel l = identity_level(1, 2, 2);
  EXPECT_EQ(spiem_forward(f1, l, {true, true}), pooled);
}

TEST(Spiem, DeterministicInit) {
  auto a = spiem_init(4, {{8, 4, 4}, {16, 2, 2}}, 3);
  auto b = spiem_init(4, {{8, 4, 4}, {16, 2, 2}}, 3);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto pa = a[i].params(), pb = b[i].params();
    for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_TRUE(bitwise_equal(pa[k]->value, pb[k]->value));
  }
  EXPECT_EQ(a[0].level, 2);
  EXPECT_EQ(a[1].level, 3);
}

TEST(Spiem, ParameterCount) {
  const std::size_t c1 = 8;
  auto levels = spiem_init(c1, {{16, 8, 8}, {32, 4, 4}, {64, 2, 2}}, 0);
  const std::size_t dims[][3] = {{16, 8, 8}, {32, 4, 4}, {64, 2, 2}};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto [ci, h, w] = dims[i];
    EXPECT_EQ(levels[i].num_params(), 2 * c1 * h * w + ci * c1 + ci);
  }
}

TEST(Spiem, RejectsBadConfig) {
  EXPECT_THROW(spiem_init(4, {}, 0), ConfigError);
  SpiemLevel l = spiem_init(4, {{8, 4, 4}}, 0).front();
  EXPECT_THROW(spiem_forward(Tensor(Shape{1, 3, 8, 8}), l, {true, true}), ShapeError);
  EXPECT_THROW(spiem_forward(Tensor(Shape{1, 4, 2, 2}), l, {true, true}), ShapeError);
}

TEST(Spiem, OutputAlignsWithLevel) {
  Rng rng(2);
  const Tensor f1 = random_tensor({3, 4, 16, 16}, rng);
  auto levels = spiem_init(4, {{8, 8, 8}, {16, 4, 4}, {32, 2, 2}}, 1);
  for (SpiemLevel& l : levels) {
    for (SpiemFlags f : {SpiemFlags{true, true}, SpiemFlags{true, false}, SpiemFlags{false, true}}) {
      EXPECT_EQ(spiem_forward(f1, l, f).shape(), (Shape{3, l.target.channels, l.target.height, l.target.width}));
    }
  }
}

TEST(Spiem, AveragePathIgnoresPermutationWithinWindow) {
  Rng rng(3);
  Tensor f1 = random_tensor({1, 2, 8, 8}, rng);
  SpiemLevel l = spiem_init(2, {{4, 2, 2}}, 5).front();
  const Tensor before = spiem_forward(f1, l, {true, false});
  // Swap two elements inside the top-left 4x4 window of channel 1.
  std::swap(f1.at(0, 1, 0, 0), f1.at(0, 1, 3, 2));
  EXPECT_LE(max_abs_diff(before, spiem_forward(f1, l, {true, false})), 1e-15);
  // A new window maximum does reach the max path.
  const Tensor max_before = spiem_forward(f1, l, {false, true});
  f1.at(0, 0, 1, 1) = 10.0;
  EXPECT_GT(max_abs_diff(max_before, spiem_forward(f1, l, {false, true})), 0.0);
}

TEST(Spiem, MaxPathDependsOnlyOnWindowMaxima) {
  Rng rng(4);
  Tensor f1 = random_tensor({1, 2, 8, 8}, rng, 0.0, 1.0);
  SpiemLevel l = spiem_init(2, {{4, 2, 2}}, 5).front();
  const Tensor before = spiem_forward(f1, l, {false, true});
  // Lower every non-maximal element; maxima stay put.
  const auto pooled = kernels::adaptive_max_pool(f1, 2, 2);
  Tensor g = f1;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::find(pooled.argmax.begin(), pooled.argmax.end(), i) == pooled.argmax.end()) g[i] -= 0.5;
  }
  EXPECT_TRUE(bitwise_equal(before, spiem_forward(g, l, {false, true})));
}

TEST(Spiem, DisabledIsZeroConstant) {
  Rng rng(5);
  SpiemLevel l = spiem_init(2, {{4, 2, 2}}, 5).front();
  Tape t;
  Var out = spiem_forward(t.leaf(random_tensor({1, 2, 4, 4}, rng)), l, {false, false});
  EXPECT_EQ(out.value(), Tensor(Shape{1, 4, 2, 2}));
  EXPECT_FALSE(t.requires_grad(out.id));
}
