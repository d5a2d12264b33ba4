// lrfpn: command-line front end for the LR-FPN toolkit.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or config error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lrfpn/ablation.hpp"
#include "lrfpn/bench.hpp"
#include "lrfpn/checkpoint.hpp"
#include "lrfpn/config.hpp"
#include "lrfpn/errors.hpp"
#include "lrfpn/gradcheck.hpp"
#include "lrfpn/metrics.hpp"
#include "lrfpn/oracle.hpp"

namespace {

using namespace lrfpn;

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> flags;
  std::optional<std::size_t> steps;
  std::optional<std::string> dtype;
  std::optional<std::size_t> jobs;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "config file (key = value)")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "seed; replaces the config's seed list");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--flags", c.flags, "ablation flags: comma list of sp,pp,si,ci,li,ni or none");
  sub->add_option("--steps", c.steps, "training steps");
  sub->add_option("--dtype", c.dtype, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  sub->add_option("--jobs", c.jobs, "worker threads");
}

RunConfig resolve(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) rc.seeds = {*c.seed};
  if (c.out) rc.out_dir = *c.out;
  if (c.flags) rc.flags = parse_flags(*c.flags);
  if (c.steps) set_config_value(rc, "steps", std::to_string(*c.steps));
  if (c.dtype) set_config_value(rc, "dtype", *c.dtype);
  if (c.jobs) set_config_value(rc, "jobs", std::to_string(*c.jobs));
  rc.validate();
  return rc;
}

std::string out_path(const RunConfig& rc, const std::string& file) {
  std::filesystem::create_directories(rc.out_dir);
  return (std::filesystem::path(rc.out_dir) / file).string();
}

void require_f64(const RunConfig& rc, const char* cmd) {
  if (rc.dtype != DType::f64) throw ConfigError(fmt::format("{}: only f64 is supported; f32 is bench-only", cmd));
}

int cmd_shapes(const RunConfig& rc) {
  const ModelConfig& m = rc.model;
  fmt::print("input  {}\n", Shape{1, m.image_channels, m.image_size, m.image_size}.str());
  for (std::size_t s = 0; s < 4; ++s) {
    fmt::print("F{}     {}\n", s + 1, Shape{1, m.stage_channels[s], m.stage_size(s), m.stage_size(s)}.str());
  }
  const auto p = pyramid_shapes(m, 1);
  // Check against an actual forward pass rather than trusting the formula alone.
  LrFpnModel model = make_model(m, rc.flags, rc.seeds.front());
  std::array<Tensor, 4> f;
  for (std::size_t s = 0; s < 4; ++s) f[s] = Tensor(Shape{1, m.stage_channels[s], m.stage_size(s), m.stage_size(s)});
  const auto actual = build_pyramid(f, model);
  bool ok = true;
  for (std::size_t i = 0; i < 5; ++i) {
    const bool match = actual[i].shape() == p[i];
    ok = ok && match;
    fmt::print("P{}     {}{}\n", i + 1, actual[i].shape().str(), match ? "" : fmt::format("  expected {}", p[i].str()));
  }
  fmt::print("params {}\n", model.num_params());
  return ok ? kOk : kVerifyFailed;
}

int cmd_gradcheck(const RunConfig& rc, bool full_size, const std::string& corrupt_op) {
  require_f64(rc, "gradcheck");
  GradcheckOptions o;
  if (full_size) o.model = rc.model;
  o.flags = rc.flags;
  o.probes = rc.gradcheck_probes;
  o.step = rc.gradcheck_step;
  o.tolerance = rc.gradcheck_tolerance;
  o.seed = rc.seeds.front();
  o.corrupt_op = corrupt_op;
  const GradcheckReport report = run_gradcheck(o);
  const std::string text = report.text();
  write_file(out_path(rc, "gradcheck.txt"), text);
  std::cout << text;
  fmt::print("runtime {:.2f} s\n", report.seconds);
  if (!report.pass()) {
    std::string names;
    for (const std::string& n : report.failing()) names += (names.empty() ? "" : ", ") + n;
    fmt::print(stderr, "gradcheck failed: {}\n", names);
    return kVerifyFailed;
  }
  return kOk;
}

int cmd_oracle(const RunConfig& rc, std::size_t cases) {
  const OracleReport report = run_oracle(cases, rc.seeds.front());
  const std::string text = report.text();
  write_file(out_path(rc, "oracle.txt"), text);
  std::cout << text;
  return report.pass() ? kOk : kVerifyFailed;
}

void write_metrics(const RunConfig& rc, const std::vector<MetricsRecord>& records) {
  write_file(out_path(rc, "metrics.csv"), metrics_csv(records));
  write_file(out_path(rc, "trace.csv"), trace_csv(records));
  write_file(out_path(rc, "summary.csv"), summary_csv(records));
  write_file(out_path(rc, "timings.csv"), timings_csv(records));
}

int cmd_ablate(const RunConfig& rc, const std::string& sets_arg, bool flags_given) {
  require_f64(rc, "ablate");
  std::vector<FlagSet> sets;
  if (!sets_arg.empty()) {
    std::size_t start = 0;
    while (start <= sets_arg.size()) {
      const std::size_t end = std::min(sets_arg.find(';', start), sets_arg.size());
      sets.push_back(find_row(sets_arg.substr(start, end - start)));
      start = end + 1;
    }
  } else if (flags_given) {
    sets.push_back({flag_set_label(rc.flags), rc.flags});
  } else {
    sets = ablation_rows();
  }
  const auto records = run_ablation(rc, sets, rc.jobs);
  write_metrics(rc, records);
  std::cout << summary_csv(records);
  fmt::print("wrote {} rows to {}\n", records.size(), out_path(rc, "metrics.csv"));
  return kOk;
}

int cmd_train(const RunConfig& rc, const std::string& init_from) {
  require_f64(rc, "train-toy");
  const FlagSet set{flag_set_label(rc.flags), rc.flags};
  std::vector<MetricsRecord> records;
  for (std::uint64_t seed : rc.seeds) {
    LrFpnModel model = make_model(rc.model, rc.flags, seed);
    if (!init_from.empty()) apply_checkpoint(model, load_checkpoint(init_from));
    TrainTrace trace = train_toy(std::move(model), rc.train, rc.scene_spec(), seed);
    MetricsRecord r;
    r.flag_set = set.label;
    r.flags = format_flags(set.flags);
    r.seed = seed;
    r.run_id = fmt::format("{}@{}", set.label, seed);
    r.losses = std::move(trace.losses);
    r.init_seconds = trace.init_seconds;
    r.train_seconds = trace.train_seconds;
    save_checkpoint(trace.model, out_path(rc, fmt::format("train_seed{}.lrfpn", seed)));
    fmt::print("seed {}: loss {:.6f} -> {:.6f} ({:.1f}% drop)\n", seed, r.initial_loss(), r.final_loss(),
               100.0 * (1.0 - r.final_loss() / r.initial_loss()));
    records.push_back(std::move(r));
  }
  sort_records(records);
  write_metrics(rc, records);
  return kOk;
}

int cmd_bench(const RunConfig& rc, std::size_t batch) {
  BenchOptions o;
  o.model = rc.model;
  o.batch = batch;
  o.reps = rc.bench_reps;
  o.warmup = rc.bench_warmup;
  o.dtype = rc.dtype;
  o.seed = rc.seeds.front();
  const BenchReport report = run_bench(o);
  write_file(out_path(rc, "bench.json"), report.json());
  for (const KernelTiming& k : report.kernels) {
    fmt::print("{:<30} {:>10.3f} ms {:>10.3f} ms  x{:.2f}\n", k.name, k.naive_ms, k.optimized_ms, k.speedup);
  }
  fmt::print("speedup {:.2f}\n", report.speedup);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LR-FPN toy toolkit"};
  app.require_subcommand(1);

  Common shapes_c, grad_c, oracle_c, ablate_c, train_c, bench_c;
  auto* shapes = app.add_subcommand("shapes", "print backbone and pyramid shapes for the config");
  add_common(shapes, shapes_c);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every backward rule");
  add_common(grad, grad_c);
  bool full_size = false;
  std::string corrupt_op;
  grad->add_flag("--full-size", full_size, "check the configured model instead of the miniature one");
  grad->add_option("--corrupt-op", corrupt_op)->group("");  // test fixture only

  auto* orc = app.add_subcommand("oracle", "compare kernels against independent implementations");
  add_common(orc, oracle_c);
  std::size_t cases = 100;
  orc->add_option("--cases", cases, "random cases per check")->check(CLI::PositiveNumber);

  auto* ablate = app.add_subcommand("ablate", "train every flag set x seed and write metrics");
  add_common(ablate, ablate_c);
  std::string sets;
  ablate->add_option("--sets", sets, "';'-separated row labels, e.g. 'baseline;full'");

  auto* train = app.add_subcommand("train-toy", "train one flag set on the synthetic task");
  add_common(train, train_c);
  std::string init_from;
  train->add_option("--init", init_from, "start from a checkpoint")->check(CLI::ExistingFile);

  auto* bench = app.add_subcommand("bench", "time naive vs optimized convolution");
  add_common(bench, bench_c);
  std::size_t batch = 4;
  bench->add_option("--batch", batch, "batch size")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*shapes) return cmd_shapes(resolve(shapes_c));
    if (*grad) return cmd_gradcheck(resolve(grad_c), full_size, corrupt_op);
    if (*orc) return cmd_oracle(resolve(oracle_c), cases);
    if (*ablate) return cmd_ablate(resolve(ablate_c), sets, ablate_c.flags.has_value());
    if (*train) return cmd_train(resolve(train_c), init_from);
    if (*bench) return cmd_bench(resolve(bench_c), batch);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  } catch (const ShapeError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  } catch (const DivergenceError& e) {
    fmt::print(stderr, "diverged at step {}: {}\n", e.step(), e.what());
    return kVerifyFailed;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kVerifyFailed;
  }
  return kUsage;
}
