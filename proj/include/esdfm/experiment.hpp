#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "esdfm/datagen.hpp"
#include "esdfm/learner.hpp"
#include "esdfm/methods.hpp"
#include "esdfm/protocol.hpp"

namespace esdfm {

inline constexpr Seconds kThirtyDays = 30 * 86400.0;

struct ModelConfig {
  std::vector<std::size_t> hidden{256, 256, 128};
  std::size_t embed_dim = 8;
  double leaky_slope = 0.01;
};

struct DataSource {
  enum class Kind { Synthetic, Criteo };
  Kind kind = Kind::Synthetic;
  GenConfig synthetic;
  /// Explicit discrete truth; empty means SyntheticTruth::random.
  std::vector<double> cell_cvr;
  std::vector<double> cell_rate;
  std::string criteo_path;
};

struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  DataSource data;
  Seconds elapsed_c = 900.0;
  std::vector<MethodName> methods{MethodName::Vanilla, MethodName::Oracle, MethodName::EsDfm};
  Seconds bucket_width = 3600.0;
  double disturbance = 0.0;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "out";
  TrainConfig train;
  ModelConfig model;
  std::size_t pretrain_epochs = 1;
  std::size_t estimator_epochs = 1;
  /// Synthetic only: es_dfm uses closed-form weights instead of f_dp / f_rn.
  bool ideal_weights = false;
  /// Keep training f_dp / f_rn during streaming on samples whose labels have
  /// matured past the attribution window.
  bool estimator_streaming = false;
  /// Defaults to 30 days for Criteo and the horizon for synthetic data.
  std::optional<Seconds> attribution_window;
  std::size_t threads = 1;

  Seconds window() const;
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);

struct Dataset {
  std::vector<ClickEvent> events;
  std::shared_ptr<const SyntheticTruth> truth;  // null for logged data
};

/// Synthetic data uses `seed` in place of the configured generator seed.
Dataset load_dataset(const ExperimentConfig& config, std::uint64_t seed);

/// Everything fitted on the pre-training half.
struct Prepared {
  StreamSplit split;
  ArchSpec arch;
  MlpModel pretrained;
  Estimators estimators;
  std::size_t n_buckets = 0;
};

Prepared prepare(const ExperimentConfig& config, const Dataset& data, std::uint64_t seed);

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<StreamReport> reports;  // in config.methods order
  double observable_fraction = 0.0;   // converters in the streaming half with h <= c

  const StreamReport& report(MethodName name) const;
};

/// Streams every configured method over the (optionally disturbed) streaming half.
SeedRun run_prepared(const ExperimentConfig& config, const Dataset& data, const Prepared& prepared,
                     std::uint64_t seed);

SeedRun run_seed(const ExperimentConfig& config, const Dataset& data, std::uint64_t seed);

/// Runs `jobs` on up to `threads` worker threads, returning results in order.
template <typename Result>
std::vector<Result> run_jobs(std::vector<std::function<Result()>> jobs, std::size_t threads) {
  std::vector<Result> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= jobs.size()) return;
      try {
        results[i] = jobs[i]();
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(jobs.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

struct SweepRow {
  Seconds c = 0.0;
  std::uint64_t seed = 0;
  double observable_fraction = 0.0;
  PooledMetrics metrics;
};

/// es_dfm per (c, seed), with weights re-estimated for each c.
std::vector<SweepRow> sweep_elapsed(const ExperimentConfig& config, std::span<const Seconds> c_values);

struct RobustnessRow {
  double d = 0.0;
  MethodName method = MethodName::EsDfm;
  std::uint64_t seed = 0;
  PooledMetrics metrics;
};

/// Configured methods per (d, seed); only the streaming half is disturbed.
std::vector<RobustnessRow> robustness(const ExperimentConfig& config, std::span<const double> d_values);

/// Fraction of converters whose delay is at most c.
double observable_fraction(const std::vector<ClickEvent>& events, Seconds c);

}  // namespace esdfm
