#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstdint>

#include "lrfpn/errors.hpp"
#include "lrfpn/kernels.hpp"
#include "lrfpn/pyramid.hpp"
#include "lrfpn/reference_fpn.hpp"
#include "lrfpn/rng.hpp"

using namespace lrfpn;

namespace {

std::array<Tensor, 4> random_features(const ModelConfig& m, std::size_t n, Rng& rng) {
  std::array<Tensor, 4> f;
  for (std::size_t s = 0; s < 4; ++s) {
    f[s] = random_tensor({n, m.stage_channels[s], m.stage_size(s), m.stage_size(s)}, rng);
  }
  return f;
}

AblationFlags spiem_only(bool pp, bool sp) {
  AblationFlags f = AblationFlags::none();
  f.spiem = {pp, sp};
  return f;
}

}  // namespace

TEST(Pyramid, DefaultShapesHalve) {
  const ModelConfig m;
  const auto p = pyramid_shapes(m, 2);
  const std::size_t expect[] = {16, 8, 4, 2, 1};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(p[i], (Shape{2, 16, expect[i], expect[i]}));

  Rng rng(1);
  LrFpnModel model = make_model(m, AblationFlags::all(), 3);
  const auto out = build_pyramid(random_features(m, 2, rng), model);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(out[i].shape(), p[i]);
}

TEST(Pyramid, ZeroInputsAndBiasesGiveZero) {
  const ModelConfig m;
  for (AblationFlags flags : {AblationFlags::none(), AblationFlags::all()}) {
    LrFpnModel model = make_model(m, flags, 0);
    for (Param* p : model.params()) {
      if (p->rank == 1) p->value.fill(0.0);
    }
    std::array<Tensor, 4> f;
    for (std::size_t s = 0; s < 4; ++s) f[s] = Tensor(Shape{1, m.stage_channels[s], m.stage_size(s), m.stage_size(s)});
    for (const Tensor& p : build_pyramid(f, model)) EXPECT_EQ(p, Tensor(p.shape()));
  }
}

TEST(Pyramid, BaselineMatchesPlainFpnBitwise) {
  Rng rng(2);
  for (ModelConfig m : {ModelConfig{}, miniature_config()}) {
    for (std::uint64_t seed : {0u, 7u}) {
      LrFpnModel model = make_model(m, AblationFlags::none(), seed);
      reference::PlainFpn fpn = reference::from_model(model);
      const Tensor image = random_tensor({2, m.image_channels, m.image_size, m.image_size}, rng);
      Tape a, b;
      const PyramidMaps p = build_pyramid(backbone_forward(a.constant(image), model), model);
      const auto q = reference::forward(b.constant(image), fpn);
      for (std::size_t i = 0; i < 5; ++i) EXPECT_TRUE(bitwise_equal(p[i].value(), q[i].value())) << "P" << i + 1;
    }
  }
}

TEST(Pyramid, DisabledSpiemIgnoresF1) {
  Rng rng(3);
  const ModelConfig m;
  LrFpnModel model = make_model(m, spiem_only(false, false), 1);
  auto f = random_features(m, 1, rng);
  const auto before = build_pyramid(f, model);
  f[0] = random_tensor(f[0].shape(), rng);
  const auto after = build_pyramid(f, model);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_TRUE(bitwise_equal(before[i], after[i]));
}

TEST(Pyramid, EnabledSpiemReachesP3) {
  Rng rng(4);
  const ModelConfig m;
  for (AblationFlags flags : {spiem_only(true, false), spiem_only(false, true), spiem_only(true, true)}) {
    LrFpnModel model = make_model(m, flags, 1);
    auto f = random_features(m, 1, rng);
    const auto before = build_pyramid(f, model);
    f[0] = kernels::add(f[0], random_tensor(f[0].shape(), rng));
    EXPECT_GT(max_abs_diff(before[2], build_pyramid(f, model)[2]), 0.0);
  }
}

TEST(Pyramid, DisabledSpiemMatchesModelWithoutIt) {
  Rng rng(5);
  const ModelConfig m;
  AblationFlags off = AblationFlags::all();
  off.spiem = {false, false};
  LrFpnModel with = make_model(m, off, 2);
  LrFpnModel without = make_model(m, off, 2);
  without.spiem.clear();
  const auto f = random_features(m, 2, rng);
  const auto a = build_pyramid(f, with), b = build_pyramid(f, without);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_TRUE(bitwise_equal(a[i], b[i]));
}

TEST(Pyramid, ZeroingTopLateralLeavesFirstTerm) {
  Rng rng(6);
  const ModelConfig m;
  LrFpnModel model = make_model(m, AblationFlags::none(), 3);
  CimBlock& top = model.cim[2];
  top.proj_weight.value.fill(0.0);
  top.proj_bias.value.fill(0.0);
  const auto f = random_features(m, 1, rng);
  const auto p = build_pyramid(f, model);
  EXPECT_EQ(p[2], Tensor(p[2].shape()));
  const Tensor lateral = kernels::conv2d(f[2], model.cim[1].proj_weight.value, &model.cim[1].proj_bias.value, {1, 0},
                                         m.path);
  EXPECT_TRUE(bitwise_equal(p[1], lateral));
}

TEST(Pyramid, RejectsBadFeatureChain) {
  const ModelConfig m;
  LrFpnModel model = make_model(m, AblationFlags::all(), 0);
  Rng rng(7);
  auto f = random_features(m, 1, rng);
  f[2] = random_tensor({1, m.stage_channels[2], 7, 7}, rng);
  EXPECT_THROW(build_pyramid(f, model), ShapeError);
}

TEST(Pyramid, ConfigValidation) {
  ModelConfig m;
  m.image_size = 60;
  EXPECT_THROW(m.validate(), ConfigError);
  m = ModelConfig{};
  m.reduction = 0;
  EXPECT_THROW(m.validate(), ConfigError);
  EXPECT_NO_THROW(miniature_config().validate());
}

TEST(Head, LossExamples) {
  const ModelConfig m = miniature_config();
  LrFpnModel model = make_model(m, AblationFlags::all(), 0);
  model.head_weight.value.fill(0.0);
  model.head_bias.value.fill(0.0);
  const Batch batch = make_batch(scene_for(m), 0, 0, 2);
  Tape t;
  EXPECT_NEAR(forward_loss(t, model, batch.images, batch.heatmaps).value()[0], std::log(2.0), 1e-15);

  // A saturating head bias that agrees with an all-zero target drives the loss to ~0.
  model.head_bias.value.fill(-40.0);
  Tape u;
  const Tensor zeros(batch.heatmaps.shape());
  EXPECT_LT(forward_loss(u, model, batch.images, zeros).value()[0], 1e-15);
}

TEST(Head, LossFiniteAtRandomInit) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelConfig m;
    LrFpnModel model = make_model(m, AblationFlags::all(), seed);
    const Batch batch = make_batch(scene_for(m), seed, 0, 4);
    Tape t;
    EXPECT_TRUE(std::isfinite(forward_loss(t, model, batch.images, batch.heatmaps).value()[0]));
  }
}

TEST(Model, ParamNamesAndInitDeterminism) {
  LrFpnModel a = make_model(ModelConfig{}, AblationFlags::all(), 5);
  LrFpnModel b = make_model(ModelConfig{}, AblationFlags::all(), 5);
  auto pa = a.params(), pb = b.params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_TRUE(bitwise_equal(pa[i]->value, pb[i]->value));
  }
  EXPECT_NE(a.find("spiem.3.wbar"), nullptr);
  EXPECT_NE(a.find("cim.4.dwd"), nullptr);
  EXPECT_NE(a.find("extra.5.weight"), nullptr);
  EXPECT_EQ(a.find("nope"), nullptr);
}

TEST(Training, RejectsZeroSteps) {
  TrainOptions o;
  o.steps = 0;
  EXPECT_THROW(train_toy(miniature_config(), AblationFlags::all(), o, scene_for(miniature_config()), 0), ConfigError);
}

TEST(Training, SameSeedSameTrace) {
  const ModelConfig m = miniature_config();
  TrainOptions o;
  o.steps = 20;
  const auto a = train_toy(m, AblationFlags::all(), o, scene_for(m), 3);
  const auto b = train_toy(m, AblationFlags::all(), o, scene_for(m), 3);
  ASSERT_EQ(a.losses.size(), 20u);
  EXPECT_EQ(a.losses, b.losses);
}

TEST(Training, BaselineTraceMatchesPlainFpn) {
  const ModelConfig m = miniature_config();
  TrainOptions o;
  o.steps = 30;
  const auto lr = train_toy(m, AblationFlags::none(), o, scene_for(m), 4);
  LrFpnModel donor = make_model(m, AblationFlags::none(), 4);
  const auto plain = reference::train(reference::from_model(donor), o, scene_for(m), 4);
  ASSERT_EQ(lr.losses.size(), plain.losses.size());
  for (std::size_t i = 0; i < lr.losses.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(lr.losses[i]), std::bit_cast<std::uint64_t>(plain.losses[i])) << i;
  }
}

TEST(Training, DivergenceIsReported) {
  const ModelConfig m = miniature_config();
  TrainOptions o;
  o.steps = 50;
  o.sgd.lr = 1e6;
  try {
    train_toy(m, AblationFlags::all(), o, scene_for(m), 0);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.step(), 1u);
  }
}
