#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrfpn/config.hpp"

namespace lrfpn {

struct MetricsRecord {
  std::string run_id;
  std::string flag_set;  ///< row label, e.g. "+SPIEM+CI"
  std::string flags;     ///< canonical token list
  std::uint64_t seed = 0;
  std::vector<double> losses;
  double init_seconds = 0.0;
  double train_seconds = 0.0;

  double initial_loss() const { return losses.front(); }
  double final_loss() const { return losses.back(); }
};

/// Orders records by (table position of the flag set, seed); custom sets sort
/// after the table rows, by label.
void sort_records(std::vector<MetricsRecord>& records);

inline constexpr const char* kMetricsHeader = "run_id,flag_set,flags,seed,steps,initial_loss,final_loss,loss_ratio";

/// One row per record with kMetricsHeader as the header. Reals are written in
/// shortest round-trip form, so equal runs produce identical bytes.
std::string metrics_csv(const std::vector<MetricsRecord>& records);
/// flag_set,seed,step,loss for every step of every record.
std::string trace_csv(const std::vector<MetricsRecord>& records);
/// Median and mean final loss per flag set across seeds.
std::string summary_csv(const std::vector<MetricsRecord>& records);
/// Wall-clock phases; kept out of metrics.csv so that file stays reproducible.
std::string timings_csv(const std::vector<MetricsRecord>& records);

double median(std::vector<double> values);

void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace lrfpn
