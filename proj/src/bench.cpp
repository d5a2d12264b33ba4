#include "lrfpn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "lrfpn/rng.hpp"
#include "lrfpn/scene.hpp"

namespace lrfpn {
namespace {

using Clock = std::chrono::steady_clock;

double time_median(const std::function<void()>& fn, std::size_t reps, std::size_t warmup) {
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> samples;
  samples.reserve(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    fn();
    samples.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
  }
  return median_ms(std::move(samples));
}

template <typename T>
BasicTensor<T> cast(const Tensor& t) {
  std::vector<T> v(t.data().begin(), t.data().end());
  return BasicTensor<T>(t.shape(), std::move(v));
}

template <typename T>
double max_abs(const BasicTensor<T>& t) {
  double m = 0.0;
  for (T v : t.data()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

template <typename T>
double max_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

struct ConvCase {
  std::string name;
  Shape input;
  Shape kernel;
  ConvSpec spec;
};

template <typename T>
KernelTiming time_conv(const ConvCase& c, const BenchOptions& o, Rng& rng) {
  const BasicTensor<T> x = cast<T>(random_tensor(c.input, rng));
  const BasicTensor<T> k = cast<T>(random_tensor(c.kernel, rng));
  const BasicTensor<T> b = cast<T>(random_tensor({c.kernel.n, 1, 1, 1}, rng));
  const BasicTensor<T> ref = kernels::conv2d(x, k, &b, c.spec, ConvPath::naive);
  const BasicTensor<T> opt = kernels::conv2d(x, k, &b, c.spec, ConvPath::optimized);

  KernelTiming t;
  t.name = c.name;
  t.dtype = std::is_same_v<T, double> ? "f64" : "f32";
  t.input = c.input.str();
  t.output = ref.shape().str();
  t.max_abs_diff = max_diff(ref, opt);
  t.tolerance = std::is_same_v<T, double> ? 1e-10 : 1e-4 * std::max(1.0, max_abs(ref));
  if (!(t.max_abs_diff <= t.tolerance)) {
    throw std::runtime_error(fmt::format("bench guard: {} naive and optimized outputs differ by {:.3e}", c.name,
                                         t.max_abs_diff));
  }
  t.naive_ms = time_median([&] { (void)kernels::conv2d(x, k, &b, c.spec, ConvPath::naive); }, o.reps, o.warmup);
  t.optimized_ms =
      time_median([&] { (void)kernels::conv2d(x, k, &b, c.spec, ConvPath::optimized); }, o.reps, o.warmup);
  t.speedup = t.optimized_ms > 0.0 ? t.naive_ms / t.optimized_ms : 0.0;
  return t;
}

Tensor full_forward(LrFpnModel& model, const Tensor& images) {
  Tape tape;
  PyramidMaps p = build_pyramid(backbone_forward(tape.constant(images), model), model);
  return head_forward(p[0], model).value();
}

}  // namespace

double median_ms(std::vector<double> samples) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const std::size_t mid = samples.size() / 2;
  return samples.size() % 2 == 1 ? samples[mid] : 0.5 * (samples[mid - 1] + samples[mid]);
}

BenchReport run_bench(const BenchOptions& o) {
  if (o.reps < 1) throw ConfigError("bench: reps must be >= 1");
  o.model.validate();
  Rng rng(mix_seed(o.seed, 0xbe7c));
  const ModelConfig& m = o.model;
  const std::size_t n = o.batch;
  const std::size_t s = m.image_size;
  const std::size_t d = m.pyramid_channels;
  const auto& ch = m.stage_channels;

  const std::vector<ConvCase> cases = {
      {"backbone.1 conv3x3 s2", {n, m.image_channels, s, s}, {ch[0], m.image_channels, 3, 3}, {2, 1}},
      {"backbone.2 conv3x3 s2", {n, ch[0], s / 2, s / 2}, {ch[1], ch[0], 3, 3}, {2, 1}},
      {"conv3x3 s1 d->d full-res", {n, d, s, s}, {d, d, 3, 3}, {1, 1}},
      {"lateral conv1x1 (f2)", {n, ch[1], s / 4, s / 4}, {d, ch[1], 1, 1}, {1, 0}},
      {"extra conv3x3 s2 (P4)", {n, d, s / 16, s / 16}, {d, d, 3, 3}, {2, 1}},
  };

  BenchReport report;
  report.options = o;
  for (const ConvCase& c : cases) {
    report.kernels.push_back(o.dtype == DType::f64 ? time_conv<double>(c, o, rng) : time_conv<float>(c, o, rng));
  }

  ModelConfig naive_cfg = m, opt_cfg = m;
  naive_cfg.path = ConvPath::naive;
  opt_cfg.path = ConvPath::optimized;
  LrFpnModel naive = make_model(naive_cfg, AblationFlags::all(), o.seed);
  LrFpnModel optimized = make_model(opt_cfg, AblationFlags::all(), o.seed);
  const Batch batch = make_batch(scene_for(m), o.seed, 0, n);

  KernelTiming full;
  full.name = "lr-fpn forward (all modules)";
  full.dtype = "f64";
  full.input = batch.images.shape().str();
  const Tensor ref = full_forward(naive, batch.images);
  full.output = ref.shape().str();
  full.max_abs_diff = max_abs_diff(ref, full_forward(optimized, batch.images));
  full.tolerance = 1e-10;
  if (!(full.max_abs_diff <= full.tolerance)) {
    throw std::runtime_error(fmt::format("bench guard: full forward paths differ by {:.3e}", full.max_abs_diff));
  }
  full.naive_ms = time_median([&] { (void)full_forward(naive, batch.images); }, o.reps, o.warmup);
  full.optimized_ms = time_median([&] { (void)full_forward(optimized, batch.images); }, o.reps, o.warmup);
  full.speedup = full.optimized_ms > 0.0 ? full.naive_ms / full.optimized_ms : 0.0;
  report.kernels.push_back(full);
  report.speedup = full.speedup;
  return report;
}

std::string BenchReport::json() const {
  nlohmann::ordered_json j;
  j["config"] = {
      {"image_size", options.model.image_size},
      {"batch", options.batch},
      {"stage_channels", options.model.stage_channels},
      {"pyramid_channels", options.model.pyramid_channels},
      {"dtype", options.dtype == DType::f64 ? "f64" : "f32"},
      {"reps", options.reps},
      {"warmup", options.warmup},
      {"seed", options.seed},
  };
  j["kernels"] = nlohmann::ordered_json::array();
  for (const KernelTiming& k : kernels) {
    j["kernels"].push_back({
        {"name", k.name},
        {"dtype", k.dtype},
        {"input", k.input},
        {"output", k.output},
        {"naive_ms", k.naive_ms},
        {"optimized_ms", k.optimized_ms},
        {"speedup", k.speedup},
        {"max_abs_diff", k.max_abs_diff},
        {"tolerance", k.tolerance},
    });
  }
  j["speedup"] = speedup;
  return j.dump(2) + "\n";
}

}  // namespace lrfpn
