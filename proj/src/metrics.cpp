#include "lrfpn/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

namespace lrfpn {
namespace {

std::size_t row_rank(const std::string& label) {
  const auto& rows = ablation_rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].label == label) return i;
  }
  return rows.size();
}

}  // namespace

void sort_records(std::vector<MetricsRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const MetricsRecord& a, const MetricsRecord& b) {
    return std::tuple(row_rank(a.flag_set), a.flag_set, a.seed) <
           std::tuple(row_rank(b.flag_set), b.flag_set, b.seed);
  });
}

std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const MetricsRecord& r : records) {
    out += fmt::format("{},{},\"{}\",{},{},{},{},{}\n", r.run_id, r.flag_set, r.flags, r.seed, r.losses.size(),
                       r.initial_loss(), r.final_loss(), r.final_loss() / r.initial_loss());
  }
  return out;
}

std::string trace_csv(const std::vector<MetricsRecord>& records) {
  std::string out = "flag_set,seed,step,loss\n";
  for (const MetricsRecord& r : records) {
    for (std::size_t s = 0; s < r.losses.size(); ++s) {
      out += fmt::format("{},{},{},{}\n", r.flag_set, r.seed, s + 1, r.losses[s]);
    }
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::string summary_csv(const std::vector<MetricsRecord>& records) {
  std::string out = "flag_set,flags,seeds,median_final_loss,mean_final_loss\n";
  std::vector<std::string> order;
  std::map<std::string, std::vector<const MetricsRecord*>> groups;
  for (const MetricsRecord& r : records) {
    if (groups[r.flag_set].empty()) order.push_back(r.flag_set);
    groups[r.flag_set].push_back(&r);
  }
  for (const std::string& label : order) {
    std::vector<double> finals;
    for (const MetricsRecord* r : groups[label]) finals.push_back(r->final_loss());
    const double mean = std::accumulate(finals.begin(), finals.end(), 0.0) / static_cast<double>(finals.size());
    out += fmt::format("{},\"{}\",{},{},{}\n", label, groups[label].front()->flags, finals.size(), median(finals), mean);
  }
  return out;
}

std::string timings_csv(const std::vector<MetricsRecord>& records) {
  std::string out = "run_id,init_seconds,train_seconds\n";
  for (const MetricsRecord& r : records) {
    out += fmt::format("{},{:.6f},{:.6f}\n", r.run_id, r.init_seconds, r.train_seconds);
  }
  return out;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << contents;
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace lrfpn
