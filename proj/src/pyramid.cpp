#include "lrfpn/pyramid.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "lrfpn/ops.hpp"
#include "lrfpn/rng.hpp"

namespace lrfpn {

void ModelConfig::validate() const {
  if (image_channels == 0) throw ConfigError("model: image_channels must be positive");
  if (image_size < 16 || image_size % 16 != 0) {
    throw ConfigError(fmt::format("model: image_size {} must be a positive multiple of 16", image_size));
  }
  for (std::size_t c : stage_channels) {
    if (c == 0) throw ConfigError("model: stage channels must be positive");
  }
  if (pyramid_channels == 0) throw ConfigError("model: pyramid channel count d must be positive");
  if (reduction == 0) throw ConfigError("model: reduction ratio must be positive");
  if (dilation == 0) throw ConfigError("model: dilation must be positive");
}

ModelConfig miniature_config() {
  ModelConfig c;
  c.image_size = 16;
  c.stage_channels = {2, 4, 8, 16};
  c.pyramid_channels = 4;
  return c;
}

std::vector<Param*> LrFpnModel::params() {
  std::vector<Param*> out;
  for (std::size_t s = 0; s < 4; ++s) {
    out.push_back(&backbone_weight[s]);
    out.push_back(&backbone_bias[s]);
  }
  for (SpiemLevel& l : spiem) {
    for (Param* p : l.params()) out.push_back(p);
  }
  for (CimBlock& b : cim) {
    for (Param* p : b.params()) out.push_back(p);
  }
  for (Param* p : {&extra4_weight, &extra4_bias, &extra5_weight, &extra5_bias, &head_weight, &head_bias}) {
    out.push_back(p);
  }
  return out;
}

std::size_t LrFpnModel::num_params() {
  std::size_t total = 0;
  for (Param* p : params()) total += p->numel();
  return total;
}

Param* LrFpnModel::find(const std::string& name) {
  for (Param* p : params()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

namespace {

std::pair<Param, Param> conv_params(const std::string& prefix, std::size_t cout, std::size_t cin,
                                    std::size_t k, Rng& rng) {
  Tensor w(Shape{cout, cin, k, k});
  he_uniform(w, cin * k * k, rng);
  return {Param(prefix + ".weight", 4, std::move(w)), Param(prefix + ".bias", 1, Tensor(Shape{cout, 1, 1, 1}))};
}

}  // namespace

LrFpnModel make_model(const ModelConfig& config, AblationFlags flags, std::uint64_t seed) {
  config.validate();
  LrFpnModel m;
  m.config = config;
  m.flags = flags;
  Rng rng(mix_seed(seed, 0xbacb0e));
  std::size_t cin = config.image_channels;
  for (std::size_t s = 0; s < 4; ++s) {
    auto [w, b] = conv_params(fmt::format("backbone.{}", s + 1), config.stage_channels[s], cin, 3, rng);
    m.backbone_weight[s] = std::move(w);
    m.backbone_bias[s] = std::move(b);
    cin = config.stage_channels[s];
  }
  std::vector<SpiemLevelSpec> levels;
  for (std::size_t s = 1; s < 4; ++s) {
    levels.push_back({config.stage_channels[s], config.stage_size(s), config.stage_size(s)});
  }
  m.spiem = spiem_init(config.stage_channels[0], levels, seed);
  for (std::size_t s = 1; s < 4; ++s) {
    m.cim.push_back(cim_init(config.stage_channels[s], config.pyramid_channels, config.reduction, seed,
                             static_cast<int>(s + 1), config.dilation));
  }
  Rng tail(mix_seed(seed, 0xe7a));
  const std::size_t d = config.pyramid_channels;
  std::tie(m.extra4_weight, m.extra4_bias) = conv_params("extra.4", d, d, 3, tail);
  std::tie(m.extra5_weight, m.extra5_bias) = conv_params("extra.5", d, d, 3, tail);
  std::tie(m.head_weight, m.head_bias) = conv_params("head", 1, d, 1, tail);
  return m;
}

FeatureMaps backbone_forward(Var image, LrFpnModel& model) {
  if (image.shape().c != model.config.image_channels) {
    throw ShapeError(fmt::format("backbone: image {} has {} channels, model expects {}",
                                 image.shape().str(), image.shape().c, model.config.image_channels));
  }
  Tape& tape = *image.tape;
  FeatureMaps f;
  Var x = image;
  for (std::size_t s = 0; s < 4; ++s) {
    x = ops::relu(ops::conv2d(x, tape.param(model.backbone_weight[s]), tape.param(model.backbone_bias[s]),
                              ConvSpec{2, 1}, model.config.path));
    f[s] = x;
  }
  return f;
}

PyramidMaps build_pyramid(const FeatureMaps& f, LrFpnModel& model) {
  for (std::size_t i = 0; i + 1 < 4; ++i) {
    const Shape& a = f[i].shape();
    const Shape& b = f[i + 1].shape();
    if (a.h != 2 * b.h || a.w != 2 * b.w) {
      throw ShapeError(fmt::format("build_pyramid: F{} {} is not exactly twice F{} {}", i + 1, a.str(),
                                   i + 2, b.str()));
    }
  }
  Tape& tape = *f[0].tape;
  const ConvPath path = model.config.path;

  // Lateral outputs for source levels 4, 3, 2 (model.cim[0] is f2).
  std::array<Var, 3> lateral;
  for (std::size_t i = 3; i >= 1; --i) {
    Var x = f[i];
    if (model.flags.spiem.enabled()) {
      x = ops::add(x, spiem_forward(f[0], model.spiem[i - 1], model.flags.spiem, path));
    }
    lateral[i - 1] = cim_forward(x, model.cim[i - 1], model.flags.cim, path);
  }

  PyramidMaps p;
  p[2] = lateral[2];
  p[1] = ops::add(lateral[1], ops::upsample_nearest2x(p[2]));
  p[0] = ops::add(lateral[0], ops::upsample_nearest2x(p[1]));
  p[3] = ops::conv2d(p[2], tape.param(model.extra4_weight), tape.param(model.extra4_bias), ConvSpec{2, 1}, path);
  p[4] = ops::conv2d(p[3], tape.param(model.extra5_weight), tape.param(model.extra5_bias), ConvSpec{2, 1}, path);
  return p;
}

std::array<Tensor, 5> build_pyramid(const std::array<Tensor, 4>& f, LrFpnModel& model) {
  Tape tape;
  FeatureMaps vars;
  for (std::size_t i = 0; i < 4; ++i) vars[i] = tape.constant(f[i]);
  PyramidMaps p = build_pyramid(vars, model);
  return {p[0].value(), p[1].value(), p[2].value(), p[3].value(), p[4].value()};
}

std::array<Shape, 5> pyramid_shapes(const ModelConfig& config, std::size_t n) {
  const std::size_t d = config.pyramid_channels;
  std::array<Shape, 5> out;
  std::size_t side = config.stage_size(1);
  for (std::size_t k = 0; k < 3; ++k, side /= 2) out[k] = {n, d, side, side};
  // Extra layers: 3x3, stride 2, padding 1.
  for (std::size_t k = 3; k < 5; ++k) {
    const std::size_t prev = out[k - 1].h;
    out[k] = {n, d, (prev + 2 - 3) / 2 + 1, (prev + 2 - 3) / 2 + 1};
  }
  return out;
}

Var head_forward(Var p1, LrFpnModel& model) {
  Tape& tape = *p1.tape;
  return ops::sigmoid(ops::conv2d(p1, tape.param(model.head_weight), tape.param(model.head_bias),
                                  ConvSpec{1, 0}, model.config.path));
}

Var forward_loss(Tape& tape, LrFpnModel& model, const Tensor& images, const Tensor& targets) {
  Var image = tape.constant(images);
  PyramidMaps p = build_pyramid(backbone_forward(image, model), model);
  Var pred = head_forward(p[0], model);
  if (pred.shape() != targets.shape()) {
    throw ShapeError(fmt::format("forward_loss: target {} does not match head output {}",
                                 targets.shape().str(), pred.shape().str()));
  }
  return ops::bce_loss(pred, targets);
}

SceneSpec scene_for(const ModelConfig& config, SceneSpec base) {
  base.height = config.image_size;
  base.width = config.image_size;
  base.channels = config.image_channels;
  base.heatmap_stride = 4;
  return base;
}

TrainTrace train_toy(LrFpnModel model, const TrainOptions& options, const SceneSpec& scene,
                     std::uint64_t seed) {
  if (options.steps == 0) throw ConfigError("train_toy: steps must be >= 1");
  if (options.batch == 0) throw ConfigError("train_toy: batch must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  TrainTrace trace{{}, std::move(model), 0.0, 0.0};
  trace.losses.reserve(options.steps);
  std::vector<Param*> params = trace.model.params();
  Tape tape;
  for (std::size_t step = 0; step < options.steps; ++step) {
    Batch batch = make_batch(scene, seed, step, options.batch);
    tape.reset();
    double loss = 0.0;
    try {
      Var l = forward_loss(tape, trace.model, batch.images, batch.heatmaps);
      loss = l.value()[0];
      if (!std::isfinite(loss)) throw std::domain_error("non-finite loss");
      tape.backward(l);
    } catch (const std::domain_error& e) {
      throw DivergenceError(step + 1, fmt::format("train_toy: diverged at step {}: {}", step + 1, e.what()));
    }
    trace.losses.push_back(loss);
    sgd_step(params, options.sgd);
  }
  trace.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

TrainTrace train_toy(const ModelConfig& config, AblationFlags flags, const TrainOptions& options,
                     const SceneSpec& scene, std::uint64_t seed) {
  if (options.steps == 0) throw ConfigError("train_toy: steps must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  LrFpnModel model = make_model(config, flags, seed);
  const double init = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  TrainTrace trace = train_toy(std::move(model), options, scene, seed);
  trace.init_seconds = init;
  return trace;
}

}  // namespace lrfpn
