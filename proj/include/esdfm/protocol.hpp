#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "esdfm/datagen.hpp"
#include "esdfm/methods.hpp"
#include "esdfm/metrics.hpp"

namespace esdfm {

struct BucketRecord {
  std::size_t bucket = 0;
  std::size_t n_eval = 0;
  std::size_t n_train = 0;
  double auc = 0.0;  // NaN when the bucket has a single class
  double pr_auc = 0.0;
  double nll = 0.0;
};

struct PooledMetrics {
  std::size_t n_eval = 0;
  double auc = 0.0;
  double pr_auc = 0.0;
  double nll = 0.0;
};

struct RelativeMetrics {
  double r_auc = 0.0;
  double r_pr_auc = 0.0;
  double r_nll = 0.0;
};

struct StreamReport {
  std::string method;
  std::vector<BucketRecord> buckets;
  PooledMetrics pooled;
  std::optional<RelativeMetrics> relative;
};

/// Metrics of one evaluation set; per-class-undefined metrics become NaN.
PooledMetrics evaluate(std::span<const double> probs, std::span<const int> labels);

RelativeMetrics relative_metrics(const PooledMetrics& method, const PooledMetrics& vanilla,
                                 const PooledMetrics& oracle);

/// For each bucket b: predict the true labels of eval[b] with the current
/// model, then train on train[b]. Pooled metrics cover every prediction.
/// `matured`, when given, holds per-bucket estimator samples whose labels
/// became final during that bucket.
StreamReport run_streaming_experiment(Method& method,
                                      const std::vector<Bucket<TrainingSample>>& train,
                                      const std::vector<Bucket<ClickEvent>>& eval,
                                      std::span<const std::vector<TwoHeadSample>> matured = {});

}  // namespace esdfm
