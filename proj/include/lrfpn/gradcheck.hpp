#pragma once

// Central finite-difference verification of the analytic backward rules,
// both per primitive op and end-to-end through a full model.

#include <cstdint>
#include <string>
#include <vector>

#include "lrfpn/pyramid.hpp"

namespace lrfpn {

struct GradcheckOptions {
  ModelConfig model = miniature_config();
  AblationFlags flags = AblationFlags::all();
  std::size_t probes = 240;  ///< model parameter coordinates to probe
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so coordinates with a true
  /// gradient of zero are compared on an absolute scale.
  double floor = 1e-6;
  std::size_t batch = 2;
  std::uint64_t seed = 0;
  bool check_ops = true;
  /// Fixture hook: corrupt the backward rule of ops with this name.
  std::string corrupt_op;
};

struct CheckResult {
  std::string name;
  std::size_t probes = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;

  bool pass() const { return probes > 0 && failures == 0; }
};

struct GradcheckReport {
  std::vector<CheckResult> ops;
  std::vector<CheckResult> groups;  ///< model parameter groups
  std::size_t model_probes = 0;
  double max_rel_error = 0.0;
  double seconds = 0.0;
  double tolerance = 0.0;

  bool pass() const;
  std::vector<std::string> failing() const;
  std::string text() const;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// "cim.3.fc1.weight" -> "cim.fc1", "backbone.2.bias" -> "backbone", ...
std::string param_group(const std::string& name);

/// Throws ConfigError if probes is zero.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

/// Objective used for the end-to-end check: the training loss plus a fixed
/// random projection of every pyramid level, so P4/P5 carry gradient too.
Var gradcheck_objective(Tape& tape, LrFpnModel& model, const Tensor& images, const Tensor& targets,
                        const std::vector<Tensor>& projections);

}  // namespace lrfpn
