// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: lrfpn_acceptance <lrfpn-cli> <lrfpn-plain> <work-dir>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "lrfpn/ablation.hpp"
#include "lrfpn/checkpoint.hpp"
#include "lrfpn/cim.hpp"
#include "lrfpn/config.hpp"
#include "lrfpn/gradcheck.hpp"
#include "lrfpn/kernels.hpp"
#include "lrfpn/metrics.hpp"
#include "lrfpn/oracle.hpp"
#include "lrfpn/reference_fpn.hpp"
#include "lrfpn/rng.hpp"

namespace fs = std::filesystem;
using namespace lrfpn;

namespace {

struct Env {
  std::string cli;
  std::string plain;
  fs::path work;
};

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, std::string note) {
    pass = pass && ok;
    notes.push_back(fmt::format("{} {}", ok ? "ok  " : "FAIL", note));
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int run(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Training results shared between the viability and trend criteria.
std::vector<MetricsRecord> g_runs;

Outcome gradient_correctness(const Env& env) {
  Outcome o;
  const auto t0 = Clock::now();
  const GradcheckReport r = run_gradcheck(GradcheckOptions{});
  o.check(r.pass(), fmt::format("every op and group within 1e-4 (max rel err {:.3e})", r.max_rel_error));
  o.check(r.max_rel_error < 1e-4, "max relative error < 1e-4");
  o.check(r.model_probes >= 200, fmt::format("{} model coordinates probed (>= 200)", r.model_probes));
  std::set<std::string> seen;
  for (const CheckResult& g : r.groups) {
    if (g.probes > 0) seen.insert(g.name);
  }
  bool all = true;
  for (const char* g : {"spiem.wbar", "spiem.wtilde", "spiem.proj", "cim.dw", "cim.dwd", "cim.fc1", "cim.fc2",
                        "cim.proj", "extra", "head"}) {
    all = all && seen.count(g) == 1;
  }
  o.check(all, fmt::format("{} parameter groups probed, including SPIEM, CIM, extra, head", seen.size()));
  const int code = run(fmt::format("{} gradcheck --out {}", env.cli, (env.work / "gradcheck").string()));
  o.check(code == 0, fmt::format("`lrfpn gradcheck` exits {}", code));
  const double secs = seconds_since(t0);
  o.check(secs < 120.0, fmt::format("runtime {:.2f} s (< 120 s)", secs));
  return o;
}

Outcome kernel_oracles(const Env& env) {
  Outcome o;
  const auto t0 = Clock::now();
  const OracleReport r = run_oracle(100, 0);
  for (const OracleCheck& c : r.checks) {
    o.check(c.pass() && c.cases >= 100,
            fmt::format("{}: {} cases, max err {:.3e} (tol {:.0e})", c.name, c.cases, c.max_abs_error, c.tolerance));
  }
  const int code = run(fmt::format("{} oracle --out {}", env.cli, (env.work / "oracle").string()));
  o.check(code == 0, fmt::format("`lrfpn oracle` exits {}", code));
  const double secs = seconds_since(t0);
  o.check(secs < 60.0, fmt::format("runtime {:.2f} s (< 60 s)", secs));
  return o;
}

Outcome baseline_degeneracy(const Env& env) {
  Outcome o;
  const RunConfig rc;
  Rng rng(0xba5e);
  bool outputs_equal = true;
  for (std::uint64_t seed : rc.seeds) {
    LrFpnModel model = make_model(rc.model, AblationFlags::none(), seed);
    reference::PlainFpn fpn = reference::from_model(model);
    const Tensor image = random_tensor({4, 3, 64, 64}, rng);
    Tape a, b;
    const PyramidMaps p = build_pyramid(backbone_forward(a.constant(image), model), model);
    const auto q = reference::forward(b.constant(image), fpn);
    for (std::size_t i = 0; i < 5; ++i) outputs_equal = outputs_equal && bitwise_equal(p[i].value(), q[i].value());
    const Batch batch = make_batch(rc.scene_spec(), seed, 0, 4);
    Tape c, d;
    outputs_equal = outputs_equal && bitwise_equal(forward_loss(c, model, batch.images, batch.heatmaps).value(),
                                                   reference::loss(d, fpn, batch.images, batch.heatmaps).value());
  }
  o.check(outputs_equal, "P1..P5 and head loss bitwise equal on 5 seeds");

  bool traces_equal = true;
  for (std::uint64_t seed : rc.seeds) {
    LrFpnModel donor = make_model(rc.model, AblationFlags::none(), seed);
    const auto plain = reference::train(reference::from_model(donor), rc.train, rc.scene_spec(), seed);
    const MetricsRecord* mine = nullptr;
    for (const MetricsRecord& r : g_runs) {
      if (r.flag_set == "baseline" && r.seed == seed) mine = &r;
    }
    const std::vector<double> lr_losses =
        mine ? mine->losses : train_toy(rc.model, AblationFlags::none(), rc.train, rc.scene_spec(), seed).losses;
    bool same = lr_losses.size() == plain.losses.size() && lr_losses.size() == rc.train.steps;
    for (std::size_t i = 0; same && i < lr_losses.size(); ++i) {
      same = std::bit_cast<std::uint64_t>(lr_losses[i]) == std::bit_cast<std::uint64_t>(plain.losses[i]);
    }
    traces_equal = traces_equal && same;
  }
  o.check(traces_equal, fmt::format("{}-step loss traces bitwise equal on 5 seeds", rc.train.steps));

  const fs::path a = env.work / "baseline_cli", b = env.work / "plain_cli";
  const int ca = run(fmt::format("{} ablate --sets baseline --seed 0 --out {}", env.cli, a.string()));
  const int cb = run(fmt::format("{} --seed 0 --out {}", env.plain, b.string()));
  const bool files = ca == 0 && cb == 0 && read_file((a / "trace.csv").string()) == read_file((b / "trace.csv").string()) &&
                     read_file((a / "metrics.csv").string()) == read_file((b / "metrics.csv").string());
  o.check(files, "`lrfpn ablate --sets baseline` and `lrfpn-plain` write identical trace.csv and metrics.csv");
  return o;
}

Outcome ablation_lattice(const Env&) {
  Outcome o;
  const ModelConfig m;
  Rng rng(0x1a77);
  double worst = 0.0;
  const CimFlags li{true, true, false, false}, ni{true, false, true, false}, both{true, true, true, false};
  for (std::size_t level = 0; level < 3; ++level) {
    const std::size_t c = m.stage_channels[level + 1], side = m.stage_size(level + 1);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CimBlock b = cim_init(c, m.pyramid_channels, m.reduction, seed, static_cast<int>(level + 2), m.dilation);
      const Tensor x = random_tensor({2, c, side, side}, rng);
      Tape t;
      Var in = t.constant(x);
      // Copy each result out: recording more nodes may reallocate the tape.
      const Tensor local = cim_branches(in, b, li).value();
      const Tensor nonlocal = cim_branches(in, b, ni).value();
      const Tensor joint = cim_branches(in, b, both).value();
      worst = std::max(worst, max_abs_diff(joint, kernels::add(local, nonlocal)));
    }
  }
  o.check(worst <= 1e-12, fmt::format("branches(li,ni) == branches(li) + branches(ni), max diff {:.3e}", worst));

  bool local_blind = true, nonlocal_sees = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CimBlock b = cim_init(8, 4, 4, seed);
    const Tensor x = random_tensor({1, 8, 9, 9}, rng);
    for (auto [dy, dx] : {std::pair{2, 0}, {0, -2}, {-2, 2}, {2, -1}}) {
      Tensor moved = x;
      for (std::size_t ch = 0; ch < 8; ++ch) moved.at(0, ch, 4 + dy, 4 + dx) += 1.0;
      for (const CimFlags f : {li, ni}) {
        Tape t;
        const Tensor y0 = cim_branches(t.constant(x), b, f).value();
        const Tensor y1 = cim_branches(t.constant(moved), b, f).value();
        bool changed = false;
        for (std::size_t ch = 0; ch < 8; ++ch) changed = changed || y0.at(0, ch, 4, 4) != y1.at(0, ch, 4, 4);
        const bool dilated_tap = std::abs(dy) % 2 == 0 && std::abs(dx) % 2 == 0;
        if (f == li) local_blind = local_blind && !changed;
        if (f == ni && dilated_tap) nonlocal_sees = nonlocal_sees && changed;
      }
    }
  }
  o.check(nonlocal_sees, "distance-2 perturbation reaches the output with NI");
  o.check(local_blind, "distance-2 perturbation never reaches the output with LI alone");
  return o;
}

Outcome gate_and_shapes(const Env&) {
  Outcome o;
  const ModelConfig m;
  Rng rng(0x6a7e);
  std::size_t inputs = 0, outside = 0;
  double lo = 1.0, hi = 0.0;
  for (std::size_t level = 0; level < 3; ++level) {
    const std::size_t c = m.stage_channels[level + 1], side = m.stage_size(level + 1);
    CimBlock b = cim_init(c, m.pyramid_channels, m.reduction, level);
    for (int i = 0; i < 334; ++i, ++inputs) {
      const double scale = std::pow(10.0, rng.uniform(-2.0, 2.0));
      Tape t;
      const Tensor s = channel_gate(t.constant(random_tensor({1, c, side, side}, rng, -scale, scale)), b).value();
      for (double v : s.data()) {
        outside += !(v > 0.0 && v < 1.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  o.check(inputs >= 1000 && outside == 0,
          fmt::format("{} random inputs, gate range [{:.4f}, {:.4f}], {} values outside (0,1)", inputs, lo, hi, outside));

  LrFpnModel model = make_model(m, AblationFlags::all(), 0);
  Tape t;
  const PyramidMaps p = build_pyramid(backbone_forward(t.constant(random_tensor({1, 3, 64, 64}, rng)), model), model);
  bool halves = p[0].shape() == Shape{1, 16, 16, 16};
  std::string dims = p[0].shape().str();
  for (std::size_t k = 1; k < 5; ++k) {
    const Shape& a = p[k - 1].shape();
    const Shape& b = p[k].shape();
    halves = halves && b.c == a.c && 2 * b.h == a.h && 2 * b.w == a.w;
    dims += " " + b.str();
  }
  o.check(halves, "P1..P5 halve exactly on the default config: " + dims);
  return o;
}

Outcome training_viability(const Env& env) {
  Outcome o;
  RunConfig rc;
  const auto t0 = Clock::now();
  g_runs = run_ablation(rc, {find_row("baseline"), find_row("full")}, 1);
  const double secs = seconds_since(t0);
  for (const MetricsRecord& r : g_runs) {
    bool finite = true;
    for (double l : r.losses) finite = finite && std::isfinite(l);
    const double drop = 1.0 - r.final_loss() / r.initial_loss();
    o.check(finite && r.losses.size() == 300 && drop >= 0.5,
            fmt::format("{:<11} loss {:.4f} -> {:.4f}, drop {:.1f}%", r.run_id, r.initial_loss(), r.final_loss(),
                        100.0 * drop));
  }
  const fs::path out = env.work / "train";
  fs::create_directories(out);
  write_file((out / "metrics.csv").string(), metrics_csv(g_runs));
  o.check(secs < 600.0, fmt::format("runtime {:.1f} s for 10 runs (< 600 s)", secs));
  return o;
}

Outcome comparative_trend(const Env& env) {
  Outcome o;
  int wins = 0;
  for (std::uint64_t seed : RunConfig{}.seeds) {
    double base = NAN, full = NAN;
    for (const MetricsRecord& r : g_runs) {
      if (r.seed != seed) continue;
      (r.flag_set == "baseline" ? base : full) = r.final_loss();
    }
    const bool win = full <= base;
    wins += win;
    o.notes.push_back(fmt::format("     seed {}: full {:.5f} {} baseline {:.5f}", seed, full, win ? "<=" : "> ", base));
  }
  o.check(wins >= 3, fmt::format("full <= baseline on {} of 5 seeds (need >= 3)", wins));
  o.check(fs::exists(env.work / "train" / "metrics.csv"), "all values written to metrics.csv");
  return o;
}

Outcome determinism(const Env& env) {
  Outcome o;
  const auto ablate = [&](const std::string& dir) {
    return run(fmt::format("{} ablate --sets 'baseline;full' --seed 1 --out {}", env.cli, (env.work / dir).string()));
  };
  const int a = ablate("det_a"), b = ablate("det_b");
  for (const char* f : {"metrics.csv", "trace.csv", "summary.csv"}) {
    const bool same = a == 0 && b == 0 &&
                      read_file((env.work / "det_a" / f).string()) == read_file((env.work / "det_b" / f).string());
    o.check(same, fmt::format("{} byte-identical across two `lrfpn ablate` runs", f));
  }

  const int ba = run(fmt::format("{} bench --out {}", env.cli, (env.work / "bench_a").string()));
  const int bb = run(fmt::format("{} bench --out {}", env.cli, (env.work / "bench_b").string()));
  const std::string ja = ba == 0 ? read_file((env.work / "bench_a" / "bench.json").string()) : "";
  const std::string jb = bb == 0 ? read_file((env.work / "bench_b" / "bench.json").string()) : "";
  o.check(ba == 0 && bb == 0 && ja == jb,
          "bench.json byte-identical across two `lrfpn bench` runs (it records wall-clock timings)");

  LrFpnModel model = make_model(ModelConfig{}, AblationFlags::all(), 3);
  const std::string p1 = (env.work / "ck1.lrfpn").string(), p2 = (env.work / "ck2.lrfpn").string();
  save_checkpoint(model, p1);
  LrFpnModel other = make_model(ModelConfig{}, AblationFlags::all(), 4);
  apply_checkpoint(other, load_checkpoint(p1));
  save_checkpoint(other, p2);
  o.check(read_file(p1) == read_file(p2), "checkpoint save -> load -> save byte-identical");
  return o;
}

Outcome performance(const Env& env) {
  Outcome o;
  const fs::path dir = env.work / "bench_a";
  const bool have = fs::exists(dir / "bench.json") ||
                    run(fmt::format("{} bench --out {}", env.cli, dir.string())) == 0;
  std::string speed = "unavailable";
  if (have) {
    const std::string json = read_file((dir / "bench.json").string());
    const auto at = json.rfind("\"speedup\":");
    if (at != std::string::npos) speed = json.substr(at + 10, json.find_first_of(",\n}", at + 10) - at - 10);
  }
  o.check(have, fmt::format("bench ran at 64x64; full forward speedup {}x (target >= 3x, report only)", speed));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 4) {
    std::cerr << "usage: lrfpn_acceptance <lrfpn-cli> <lrfpn-plain> <work-dir>\n";
    return 2;
  }
  Env env{argv[1], argv[2], argv[3]};
  fs::remove_all(env.work);
  fs::create_directories(env.work);

  // Training runs first: criteria 3 and 7 reuse its traces.
  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome(const Env&)> fn;
  };
  const std::vector<Criterion> order = {
      {6, "training viability", training_viability}, {1, "gradient correctness", gradient_correctness},
      {2, "kernel oracles", kernel_oracles},         {3, "baseline degeneracy", baseline_degeneracy},
      {4, "ablation lattice integrity", ablation_lattice}, {5, "gate and shape invariants", gate_and_shapes},
      {7, "comparative trend", comparative_trend},   {8, "determinism and serialization", determinism},
      {9, "performance report", performance},
  };
  std::vector<std::pair<int, std::string>> lines;
  bool all = true;
  for (const Criterion& c : order) {
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = c.fn(env);
    } catch (const std::exception& e) {
      out.check(false, std::string("exception: ") + e.what());
    }
    all = all && out.pass;
    std::string block = fmt::format("{} criterion {}: {} ({:.1f} s)\n", out.pass ? "PASS" : "FAIL", c.id, c.title,
                                    seconds_since(t0));
    for (const std::string& n : out.notes) block += "    " + n + "\n";
    std::cout << block << std::flush;
    lines.emplace_back(c.id, fmt::format("{} criterion {}: {}", out.pass ? "PASS" : "FAIL", c.id, c.title));
  }
  std::sort(lines.begin(), lines.end());
  std::cout << "\nsummary\n";
  for (const auto& [id, l] : lines) std::cout << l << "\n";
  return all ? 0 : 1;
}
