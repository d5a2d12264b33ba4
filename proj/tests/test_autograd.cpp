#include <gtest/gtest.h>

#include <functional>
#include <stdexcept>

#include "lrfpn/ops.hpp"
#include "lrfpn/optim.hpp"
#include "lrfpn/rng.hpp"

using namespace lrfpn;

TEST(Tape, SquareHasGradientSix) {
  Tape t;
  Var w = t.leaf(Tensor(Shape{1, 1, 1, 1}, {3.0}));
  Var loss = ops::sum(ops::hadamard(w, w));
  EXPECT_EQ(loss.value()[0], 9.0);
  t.backward(loss);
  EXPECT_EQ((*t.grad(w))[0], 6.0);
}

TEST(Tape, HadamardGradientIsOtherFactor) {
  Rng rng(1);
  Tape t;
  const Tensor av = random_tensor({2, 3, 2, 2}, rng), bv = random_tensor({2, 3, 2, 2}, rng);
  Var a = t.leaf(av);
  Var b = t.constant(bv);
  t.backward(ops::sum(ops::hadamard(a, b)));
  EXPECT_EQ(*t.grad(a), bv);
  EXPECT_FALSE(t.grad(b).has_value());
}

TEST(Tape, FanOutAccumulates) {
  Tape t;
  Var x = t.leaf(Tensor(Shape{1, 1, 1, 2}, {1.0, -2.0}));
  Var y = ops::add(ops::scale(x, 2.0), ops::scale(x, 3.0));
  t.backward(ops::sum(y));
  EXPECT_EQ(*t.grad(x), Tensor(Shape{1, 1, 1, 2}, 5.0));
}

TEST(Tape, BackwardTwiceWithoutResetThrows) {
  Tape t;
  Var x = t.leaf(Tensor(Shape{1, 1, 1, 1}, {1.0}));
  Var l = ops::sum(ops::scale(x, 2.0));
  t.backward(l);
  EXPECT_THROW(t.backward(l), std::logic_error);
  t.reset();
  EXPECT_EQ(t.size(), 0u);
}

TEST(Tape, BackwardRequiresScalar) {
  Tape t;
  Var x = t.leaf(Tensor(Shape{1, 1, 1, 2}, 1.0));
  EXPECT_ANY_THROW(t.backward(ops::scale(x, 2.0)));
}

TEST(Tape, ConstantsSkipBackward) {
  Tape t;
  Var c = t.constant(Tensor(Shape{1, 1, 2, 2}, 1.0));
  Var x = t.leaf(Tensor(Shape{1, 1, 1, 1}, {2.0}));
  Var l = ops::add(ops::sum(ops::relu(ops::scale(c, 3.0))), x);
  t.backward(l);
  // Only the final add needs a backward pass; the constant branch has none.
  EXPECT_EQ(t.backward_visits(), 1u);
}

TEST(Tape, ParamGradientLandsInParam) {
  Param p("w", 4, Tensor(Shape{1, 1, 1, 2}, {1.0, 2.0}));
  Tape t;
  t.backward(ops::sum(ops::scale(t.param(p), 4.0)));
  EXPECT_EQ(p.grad, Tensor(Shape{1, 1, 1, 2}, 4.0));
  EXPECT_EQ(p.dims(), (std::vector<std::uint32_t>{1, 1, 1, 2}));
}

TEST(Tape, MaxPoolRoutesToArgmax) {
  Tape t;
  Var x = t.leaf(Tensor(Shape{1, 1, 2, 2}, {1.0, 4.0, 3.0, 2.0}));
  t.backward(ops::sum(ops::global_max_pool(x)));
  EXPECT_EQ(*t.grad(x), Tensor(Shape{1, 1, 2, 2}, {0.0, 1.0, 0.0, 0.0}));
}

TEST(Tape, AvgPoolSpreadsUniformly) {
  Tape t;
  Var x = t.leaf(Tensor(Shape{1, 1, 2, 2}, {1.0, 4.0, 3.0, 2.0}));
  t.backward(ops::sum(ops::global_avg_pool(x)));
  EXPECT_EQ(*t.grad(x), Tensor(Shape{1, 1, 2, 2}, 0.25));
}

TEST(Tape, SigmoidGradient) {
  Tape t;
  Var x = t.leaf(Tensor(Shape{1, 1, 1, 1}, {0.0}));
  t.backward(ops::sum(ops::sigmoid(x)));
  EXPECT_EQ((*t.grad(x))[0], 0.25);
}

TEST(Tape, BceGradientAtHalf) {
  Tape t;
  Var p = t.leaf(Tensor(Shape{1, 1, 1, 1}, {0.5}));
  Var l = ops::bce_loss(p, Tensor(Shape{1, 1, 1, 1}, {1.0}));
  t.backward(l);
  EXPECT_NEAR((*t.grad(p))[0], -2.0, 1e-15);
}

TEST(Sgd, PlainStep) {
  Param p("w", 1, Tensor(Shape{1, 1, 1, 1}, {1.0}));
  p.grad[0] = 0.1;
  Param* ps[] = {&p};
  sgd_step(ps, {0.1, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(p.value[0], 0.99);
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Sgd, ZeroGradDecaysMomentumOnly) {
  Param p("w", 1, Tensor(Shape{1, 1, 1, 1}, {1.0}));
  p.momentum[0] = 2.0;
  Param* ps[] = {&p};
  sgd_step(ps, {0.1, 0.5, 0.0});
  EXPECT_EQ(p.momentum[0], 1.0);
  EXPECT_DOUBLE_EQ(p.value[0], 1.0 - 0.1 * 1.0);

  Param q("q", 1, Tensor(Shape{1, 1, 1, 1}, {1.0}));
  Param* qs[] = {&q};
  sgd_step(qs, {0.1, 0.9, 0.0});
  EXPECT_EQ(q.value[0], 1.0);
  EXPECT_EQ(q.momentum[0], 0.0);
}

TEST(Sgd, MomentumRecurrence) {
  const double lr = 0.05, g = 0.3;
  Param p("w", 1, Tensor(Shape{1, 1, 1, 1}, {2.0}));
  Param* ps[] = {&p};
  p.grad[0] = g;
  sgd_step(ps, {lr, 0.9, 0.0});
  EXPECT_NEAR(p.value[0], 2.0 - lr * g, 1e-15);
  p.grad[0] = g;
  sgd_step(ps, {lr, 0.9, 0.0});
  EXPECT_NEAR(p.value[0], 2.0 - lr * g - lr * 1.9 * g, 1e-15);
}

TEST(Sgd, RejectsBadOptions) {
  Param p("w", 1, Tensor(Shape{1, 1, 1, 1}, {1.0}));
  Param* ps[] = {&p};
  EXPECT_ANY_THROW(sgd_step(ps, {0.0, 0.9, 0.0}));
  EXPECT_ANY_THROW(sgd_step(ps, {0.1, 1.0, 0.0}));
}

TEST(Sgd, WeightDecayAddsToGradient) {
  Param p("w", 1, Tensor(Shape{1, 1, 1, 1}, {2.0}));
  Param* ps[] = {&p};
  sgd_step(ps, {0.5, 0.0, 0.1});
  EXPECT_DOUBLE_EQ(p.value[0], 2.0 - 0.5 * 0.2);
}
