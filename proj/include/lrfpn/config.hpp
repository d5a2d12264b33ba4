#pragma once

// Run configuration and ablation flag handling.
//
// The config file is flat "key = value" text; '#' starts a comment, blank
// lines are ignored, key order does not matter and unknown keys are an error.
// Keys (defaults in parentheses):
//
//   image_size (64)          image_channels (3)       stage_channels (8,16,32,64)
//   pyramid_channels (16)    reduction (4)            dilation (2)
//   conv_path (optimized)    steps (300)              batch (4)
//   lr (0.01)                momentum (0.9)           weight_decay (0.0001)
//   objects_min (6)          objects_max (14)         object_size_min (2)
//   object_size_max (5)      seeds (0,1,2,3,4)        flags (sp,pp,si,ci,li,ni)
//   out_dir (out)            gradcheck_probes (240)   gradcheck_step (1e-05)
//   gradcheck_tolerance (0.0001)                      bench_reps (10)
//   bench_warmup (3)         dtype (f64)              jobs (1)

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lrfpn/pyramid.hpp"
#include "lrfpn/scene.hpp"

namespace lrfpn {

/// Parses a comma-separated token list over {sp, pp, si, ci, li, ni}, or
/// "none". "si" alone enables both depthwise branches; "li" or "ni" imply "si".
/// Throws ConfigError listing the valid tokens on an unknown token.
AblationFlags parse_flags(const std::string& tokens);

/// Canonical token list ("none" when everything is off).
std::string format_flags(const AblationFlags& flags);

/// Clears branch flags that are unreachable (li/ni without si).
AblationFlags normalized(AblationFlags flags);

struct FlagSet {
  std::string label;
  AblationFlags flags;
};

/// The ablation rows in table order: baseline, +SPIEM, +CIM, +CIM+SP, +CIM+PP,
/// +SPIEM+SI, +SPIEM+CI, +SPIEM+CI+NI, +SPIEM+CI+LI, full.
const std::vector<FlagSet>& ablation_rows();

/// Row label for a known row, otherwise "custom:<tokens>".
std::string flag_set_label(const AblationFlags& flags);

/// Looks a row up by label; throws ConfigError listing the labels.
FlagSet find_row(const std::string& label);

struct RunConfig {
  ModelConfig model;
  TrainOptions train;
  SceneSpec scene;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  AblationFlags flags = AblationFlags::all();
  std::string out_dir = "out";
  std::size_t gradcheck_probes = 240;
  double gradcheck_step = 1e-5;
  double gradcheck_tolerance = 1e-4;
  std::size_t bench_reps = 10;
  std::size_t bench_warmup = 3;
  DType dtype = DType::f64;
  std::size_t jobs = 1;

  /// Scene spec aligned with the model's image and P1 grid.
  SceneSpec scene_spec() const { return scene_for(model, scene); }
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string format_config(const RunConfig& config);

/// Applies one key/value pair; throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace lrfpn
