// lrfpn-plain: trains the plain FPN reference on the synthetic task and writes
// the same metrics.csv / trace.csv layout as `lrfpn ablate`, so its output can
// be diffed against the baseline row.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lrfpn/config.hpp"
#include "lrfpn/errors.hpp"
#include "lrfpn/metrics.hpp"
#include "lrfpn/reference_fpn.hpp"

int main(int argc, char** argv) {
  using namespace lrfpn;
  CLI::App app{"plain FPN reference trainer"};
  std::string config_path, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  app.add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed; replaces the config's seed list");
  app.add_option("--steps", steps, "training steps");
  app.add_option("--out", out, "output directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunConfig rc = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) rc.seeds = {*seed};
    if (steps) set_config_value(rc, "steps", std::to_string(*steps));
    if (!out.empty()) rc.out_dir = out;
    rc.validate();

    std::vector<MetricsRecord> records;
    for (std::uint64_t s : rc.seeds) {
      // Weights come from an all-flags-off model built with the same seed.
      LrFpnModel donor = make_model(rc.model, AblationFlags::none(), s);
      reference::PlainTrace trace = reference::train(reference::from_model(donor), rc.train, rc.scene_spec(), s);
      MetricsRecord r;
      r.flag_set = "baseline";
      r.flags = format_flags(AblationFlags::none());
      r.seed = s;
      r.run_id = fmt::format("baseline@{}", s);
      r.losses = std::move(trace.losses);
      records.push_back(std::move(r));
    }
    sort_records(records);
    std::filesystem::create_directories(rc.out_dir);
    const std::filesystem::path dir(rc.out_dir);
    write_file((dir / "metrics.csv").string(), metrics_csv(records));
    write_file((dir / "trace.csv").string(), trace_csv(records));
    fmt::print("wrote {} rows to {}\n", records.size(), (dir / "metrics.csv").string());
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
