#include "esdfm/protocol.hpp"

#include <limits>

namespace esdfm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename Fn>
double or_nan(Fn&& fn) {
  try {
    return fn();
  } catch (const UndefinedMetricError&) {
    return kNaN;
  }
}

}  // namespace

PooledMetrics evaluate(std::span<const double> probs, std::span<const int> labels) {
  PooledMetrics m;
  m.n_eval = probs.size();
  m.auc = or_nan([&] { return auc(probs, labels); });
  m.pr_auc = or_nan([&] { return pr_auc(probs, labels); });
  m.nll = or_nan([&] { return nll(probs, labels); });
  return m;
}

RelativeMetrics relative_metrics(const PooledMetrics& method, const PooledMetrics& vanilla,
                                 const PooledMetrics& oracle) {
  RelativeMetrics r;
  r.r_auc = or_nan([&] {
    return relative_metric(method.auc, vanilla.auc, oracle.auc, Orientation::HigherIsBetter);
  });
  r.r_pr_auc = or_nan([&] {
    return relative_metric(method.pr_auc, vanilla.pr_auc, oracle.pr_auc, Orientation::HigherIsBetter);
  });
  r.r_nll = or_nan([&] {
    return relative_metric(method.nll, vanilla.nll, oracle.nll, Orientation::LowerIsBetter);
  });
  return r;
}

StreamReport run_streaming_experiment(Method& method,
                                      const std::vector<Bucket<TrainingSample>>& train,
                                      const std::vector<Bucket<ClickEvent>>& eval,
                                      std::span<const std::vector<TwoHeadSample>> matured) {
  if (train.size() != eval.size()) {
    throw ProtocolError("training and evaluation streams have " + std::to_string(train.size()) +
                        " and " + std::to_string(eval.size()) + " buckets");
  }
  if (!matured.empty() && matured.size() != train.size()) {
    throw ProtocolError("matured estimator buckets do not align with the stream");
  }
  StreamReport report;
  report.method = std::string(to_string(method.spec().name));
  std::vector<double> all_probs;
  std::vector<int> all_labels;
  std::vector<const Features*> features;
  std::vector<int> labels;
  for (std::size_t b = 0; b < eval.size(); ++b) {
    features.clear();
    labels.clear();
    for (const auto& ev : eval[b]) {
      features.push_back(ev.features.get());
      labels.push_back(ev.converted() ? 1 : 0);
    }
    BucketRecord rec;
    rec.bucket = b;
    rec.n_train = train[b].size();
    if (!features.empty()) {
      const Eigen::VectorXd p = method.predict(FeatureBatch(features));
      const std::span<const double> probs(p.data(), static_cast<std::size_t>(p.size()));
      const auto m = evaluate(probs, labels);
      rec.n_eval = m.n_eval;
      rec.auc = m.auc;
      rec.pr_auc = m.pr_auc;
      rec.nll = m.nll;
      all_probs.insert(all_probs.end(), probs.begin(), probs.end());
      all_labels.insert(all_labels.end(), labels.begin(), labels.end());
    } else {
      rec.auc = rec.pr_auc = rec.nll = kNaN;
    }
    report.buckets.push_back(rec);
    method.train_bucket(train[b]);
    if (!matured.empty()) method.continue_estimator(matured[b]);
  }
  report.pooled = evaluate(all_probs, all_labels);
  return report;
}

}  // namespace esdfm
