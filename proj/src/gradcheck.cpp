#include "lrfpn/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "lrfpn/ops.hpp"
#include "lrfpn/rng.hpp"
#include "lrfpn/scene.hpp"

namespace lrfpn {
namespace {

// Scalar <out, r> recorded under its own op name so a corrupted op never
// contaminates the projection itself.
Var project(Var out, const Tensor& r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) acc += out.value()[i] * r[i];
  const std::size_t oi = out.id;
  return out.tape->record("probe", Tensor(Shape{1, 1, 1, 1}, acc), {oi},
                          [oi, r](Tape& tape, const Tensor& g) {
                            Tensor go(r.shape());
                            for (std::size_t i = 0; i < r.size(); ++i) go[i] = g[0] * r[i];
                            tape.accumulate(oi, std::move(go));
                          });
}

Var add_scalars(Var a, Var b) {
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record("probe_sum", Tensor(Shape{1, 1, 1, 1}, a.value()[0] + b.value()[0]), {ai, bi},
                        [ai, bi](Tape& tape, const Tensor& g) {
                          tape.accumulate(ai, g);
                          tape.accumulate(bi, g);
                        });
}

struct OpCase {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Var(std::vector<Var>&)> build;
};

std::vector<OpCase> op_cases(Rng& rng) {
  auto rt = [&rng](Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(s, rng, lo, hi); };
  std::vector<OpCase> cases;
  for (ConvPath path : {ConvPath::naive, ConvPath::optimized}) {
    cases.push_back({fmt::format("conv2d/{}/3x3-s2", to_string(path)),
                     {rt({2, 3, 5, 5}), rt({4, 3, 3, 3}), rt({4, 1, 1, 1})},
                     [path](std::vector<Var>& v) { return ops::conv2d(v[0], v[1], v[2], ConvSpec{2, 1}, path); }});
    cases.push_back({fmt::format("conv2d/{}/1x1", to_string(path)),
                     {rt({2, 3, 4, 3}), rt({2, 3, 1, 1}), rt({2, 1, 1, 1})},
                     [path](std::vector<Var>& v) { return ops::conv2d(v[0], v[1], v[2], ConvSpec{1, 0}, path); }});
  }
  for (std::size_t dil : {1u, 2u}) {
    cases.push_back({fmt::format("depthwise_conv2d/dilation{}", dil),
                     {rt({2, 3, 5, 6}), rt({3, 1, 3, 3})},
                     [dil](std::vector<Var>& v) { return ops::depthwise_conv2d(v[0], v[1], dil, dil); }});
  }
  cases.push_back({"adaptive_avg_pool", {rt({2, 2, 5, 7})},
                   [](std::vector<Var>& v) { return ops::adaptive_avg_pool(v[0], 2, 3); }});
  cases.push_back({"adaptive_max_pool", {rt({2, 2, 5, 7})},
                   [](std::vector<Var>& v) { return ops::adaptive_max_pool(v[0], 2, 3); }});
  cases.push_back({"global_pool", {rt({2, 3, 3, 4})}, [](std::vector<Var>& v) {
                     return ops::concat_channels(ops::global_avg_pool(v[0]), ops::global_max_pool(v[0]));
                   }});
  cases.push_back({"fully_connected", {rt({3, 4, 1, 1}), rt({5, 4, 1, 1}), rt({5, 1, 1, 1})},
                   [](std::vector<Var>& v) { return ops::fully_connected(v[0], v[1], v[2]); }});
  cases.push_back({"relu", {rt({2, 3, 4, 4})}, [](std::vector<Var>& v) { return ops::relu(v[0]); }});
  cases.push_back({"sigmoid", {rt({2, 3, 4, 4}, -3, 3)}, [](std::vector<Var>& v) { return ops::sigmoid(v[0]); }});
  cases.push_back({"upsample_nearest2x", {rt({1, 2, 3, 3})},
                   [](std::vector<Var>& v) { return ops::upsample_nearest2x(v[0]); }});
  cases.push_back({"add", {rt({2, 2, 3, 3}), rt({2, 2, 3, 3})},
                   [](std::vector<Var>& v) { return ops::add(v[0], v[1]); }});
  cases.push_back({"hadamard", {rt({2, 2, 3, 3}), rt({2, 2, 3, 3})},
                   [](std::vector<Var>& v) { return ops::hadamard(v[0], v[1]); }});
  cases.push_back({"hadamard/batch-broadcast", {rt({3, 2, 3, 3}), rt({1, 2, 3, 3})},
                   [](std::vector<Var>& v) { return ops::hadamard(v[0], v[1]); }});
  cases.push_back({"broadcast_scale", {rt({2, 3, 3, 4}), rt({2, 3, 1, 1})},
                   [](std::vector<Var>& v) { return ops::broadcast_scale(v[0], v[1]); }});
  cases.push_back({"scale", {rt({2, 2, 2, 2})}, [](std::vector<Var>& v) { return ops::scale(v[0], -1.75); }});
  cases.push_back({"concat_channels", {rt({2, 2, 2, 3}), rt({2, 3, 2, 3})},
                   [](std::vector<Var>& v) { return ops::concat_channels(v[0], v[1]); }});
  cases.push_back({"sum", {rt({2, 2, 3, 3})}, [](std::vector<Var>& v) { return ops::sum(v[0]); }});
  Tensor target = rt({2, 1, 3, 3}, 0.0, 1.0);
  cases.push_back({"bce_loss", {rt({2, 1, 3, 3}, 0.05, 0.95)},
                   [target](std::vector<Var>& v) { return ops::bce_loss(v[0], target); }});
  return cases;
}

CheckResult check_op(const OpCase& c, const GradcheckOptions& o, Rng& rng) {
  // Fixed projection so every output element contributes to the scalar.
  std::optional<Tensor> proj;
  auto evaluate = [&](const std::vector<Tensor>& inputs, bool leaves, Tape& tape) {
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(leaves ? tape.leaf(t) : tape.constant(t));
    Var out = c.build(vars);
    if (out.shape() == Shape{1, 1, 1, 1}) return std::pair(out, vars);
    if (!proj) proj = random_tensor(out.shape(), rng);
    return std::pair(project(out, *proj), vars);
  };

  Tape tape;
  if (!o.corrupt_op.empty()) tape.corrupt_backward(o.corrupt_op);
  auto [loss, vars] = evaluate(c.inputs, true, tape);
  tape.backward(loss);

  CheckResult result{c.name};
  std::vector<Tensor> inputs = c.inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto& g = tape.grad(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double analytic = g ? (*g)[i] : 0.0;
      const double orig = inputs[k][i];
      inputs[k][i] = orig + o.step;
      Tape tp;
      const double fp = evaluate(inputs, false, tp).first.value()[0];
      inputs[k][i] = orig - o.step;
      Tape tm;
      const double fm = evaluate(inputs, false, tm).first.value()[0];
      inputs[k][i] = orig;
      const double numeric = (fp - fm) / (2.0 * o.step);
      const double rel = relative_error(analytic, numeric, o.floor);
      ++result.probes;
      result.max_rel_error = std::max(result.max_rel_error, rel);
      result.max_abs_error = std::max(result.max_abs_error, std::abs(analytic - numeric));
      if (!(rel < o.tolerance)) ++result.failures;
    }
  }
  return result;
}

const std::vector<std::string>& group_order() {
  static const std::vector<std::string> order = {"backbone", "spiem.wbar", "spiem.wtilde", "spiem.proj",
                                                 "cim.dw",   "cim.dwd",    "cim.fc1",      "cim.fc2",
                                                 "cim.proj", "extra",      "head"};
  return order;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

std::string param_group(const std::string& name) {
  std::vector<std::string> parts;
  std::stringstream ss(name);
  for (std::string part; std::getline(ss, part, '.');) {
    const bool numeric = !part.empty() && std::all_of(part.begin(), part.end(), ::isdigit);
    if (!numeric && part != "weight" && part != "bias") parts.push_back(part);
  }
  if (parts.empty()) return name;
  if (parts[0] == "backbone" || parts[0] == "extra" || parts[0] == "head" || parts.size() == 1) return parts[0];
  return parts[0] + "." + parts[1];
}

Var gradcheck_objective(Tape& tape, LrFpnModel& model, const Tensor& images, const Tensor& targets,
                        const std::vector<Tensor>& projections) {
  Var image = tape.constant(images);
  PyramidMaps p = build_pyramid(backbone_forward(image, model), model);
  Var loss = ops::bce_loss(head_forward(p[0], model), targets);
  for (std::size_t k = 0; k < p.size() && k < projections.size(); ++k) {
    loss = add_scalars(loss, project(p[k], projections[k]));
  }
  return loss;
}

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  if (o.probes == 0) throw ConfigError("gradcheck: probe set is empty");
  if (!(o.step > 0.0)) throw ConfigError("gradcheck: step must be positive");
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  report.tolerance = o.tolerance;
  Rng rng(mix_seed(o.seed, 0x9c));

  if (o.check_ops) {
    for (const OpCase& c : op_cases(rng)) report.ops.push_back(check_op(c, o, rng));
  }

  LrFpnModel model = make_model(o.model, o.flags, o.seed);
  const SceneSpec scene = scene_for(o.model);
  Batch batch = make_batch(scene, o.seed, 0, o.batch);
  std::vector<Tensor> projections;
  for (const Shape& s : pyramid_shapes(o.model, o.batch)) {
    // Scaled so each level contributes O(1) to the objective.
    projections.push_back(random_tensor(s, rng, -1.0, 1.0));
    for (double& v : projections.back().data()) v /= std::sqrt(static_cast<double>(s.numel()));
  }
  auto objective = [&](Tape& tape) {
    return gradcheck_objective(tape, model, batch.images, batch.heatmaps, projections);
  };

  Tape tape;
  if (!o.corrupt_op.empty()) tape.corrupt_backward(o.corrupt_op);
  tape.backward(objective(tape));

  std::map<std::string, std::vector<Param*>> groups;
  for (Param* p : model.params()) groups[param_group(p->name)].push_back(p);
  std::vector<std::string> active;
  for (const std::string& g : group_order()) {
    if (groups.count(g) != 0) active.push_back(g);
  }
  std::map<std::string, CheckResult> results;
  for (const std::string& g : active) results[g].name = g;

  for (std::size_t k = 0; k < o.probes; ++k) {
    const std::string& g = active[k % active.size()];
    const auto& members = groups[g];
    std::size_t total = 0;
    for (Param* p : members) total += p->numel();
    std::size_t pick = rng.integer(0, total - 1);
    Param* param = members.front();
    for (Param* p : members) {
      if (pick < p->numel()) {
        param = p;
        break;
      }
      pick -= p->numel();
    }
    const double analytic = param->grad[pick];
    const double orig = param->value[pick];
    param->value[pick] = orig + o.step;
    Tape tp;
    const double fp = objective(tp).value()[0];
    param->value[pick] = orig - o.step;
    Tape tm;
    const double fm = objective(tm).value()[0];
    param->value[pick] = orig;
    const double numeric = (fp - fm) / (2.0 * o.step);
    const double rel = relative_error(analytic, numeric, o.floor);

    CheckResult& r = results[g];
    ++r.probes;
    r.max_rel_error = std::max(r.max_rel_error, rel);
    r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic - numeric));
    if (!(rel < o.tolerance)) ++r.failures;
    report.max_rel_error = std::max(report.max_rel_error, rel);
    ++report.model_probes;
  }
  for (const std::string& g : active) report.groups.push_back(results[g]);
  for (const CheckResult& r : report.ops) report.max_rel_error = std::max(report.max_rel_error, r.max_rel_error);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

bool GradcheckReport::pass() const {
  if (groups.empty() && ops.empty()) return false;
  return std::all_of(ops.begin(), ops.end(), [](const CheckResult& r) { return r.pass(); }) &&
         std::all_of(groups.begin(), groups.end(), [](const CheckResult& r) { return r.pass(); });
}

std::vector<std::string> GradcheckReport::failing() const {
  std::vector<std::string> out;
  for (const auto* list : {&ops, &groups}) {
    for (const CheckResult& r : *list) {
      if (!r.pass()) out.push_back(r.name);
    }
  }
  return out;
}

std::string GradcheckReport::text() const {
  std::string out = fmt::format("# gradient check, central differences, tolerance {}\n", tolerance);
  auto table = [&out](const char* title, const std::vector<CheckResult>& rows) {
    if (rows.empty()) return;
    out += fmt::format("\n[{}]\n{:<32} {:>7} {:>9} {:>14} {:>14}  status\n", title, "name", "probes", "failures",
                       "max_rel_err", "max_abs_err");
    for (const CheckResult& r : rows) {
      out += fmt::format("{:<32} {:>7} {:>9} {:>14.3e} {:>14.3e}  {}\n", r.name, r.probes, r.failures,
                         r.max_rel_error, r.max_abs_error, r.pass() ? "ok" : "FAIL");
    }
  };
  table("ops", ops);
  table("model parameter groups", groups);
  out += fmt::format("\nmodel probes: {}\nmax relative error: {:.3e}\nresult: {}\n", model_probes, max_rel_error,
                     pass() ? "PASS" : "FAIL");
  if (!pass()) out += fmt::format("failing: {}\n", fmt::join(failing(), ", "));
  return out;
}

}  // namespace lrfpn
