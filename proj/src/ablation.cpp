#include "lrfpn/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include <fmt/format.h>

namespace lrfpn {

MetricsRecord run_training(const RunConfig& config, const FlagSet& set, std::uint64_t seed) {
  TrainTrace trace = train_toy(config.model, set.flags, config.train, config.scene_spec(), seed);
  MetricsRecord r;
  r.flag_set = set.label;
  r.flags = format_flags(set.flags);
  r.seed = seed;
  r.run_id = fmt::format("{}@{}", set.label, seed);
  r.losses = std::move(trace.losses);
  r.init_seconds = trace.init_seconds;
  r.train_seconds = trace.train_seconds;
  return r;
}

std::vector<MetricsRecord> run_ablation(const RunConfig& config, const std::vector<FlagSet>& sets,
                                        std::size_t jobs) {
  struct Job {
    const FlagSet* set;
    std::uint64_t seed;
  };
  std::vector<Job> work;
  for (const FlagSet& s : sets) {
    for (std::uint64_t seed : config.seeds) work.push_back({&s, seed});
  }
  std::vector<MetricsRecord> results(work.size());
  std::vector<std::exception_ptr> errors(work.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      try {
        results[i] = run_training(config, *work[i].set, work[i].seed);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, work.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  sort_records(results);
  return results;
}

}  // namespace lrfpn
