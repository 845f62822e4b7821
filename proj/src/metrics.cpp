#include "esdfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "esdfm/errors.hpp"

namespace esdfm {

namespace {

void require_same_length(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  require_same_length(scores, labels);
  const auto n = scores.size();
  const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw UndefinedMetricError("AUC needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Sum of (1-based) midranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum += midrank;
    }
    i = j;
  }
  const double u = rank_sum - positives * (positives + 1.0) / 2.0;
  return u / (positives * negatives);
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  require_same_length(scores, labels);
  const auto n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double hits = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[order[k]] != 1) continue;
    hits += 1.0;
    total += hits / static_cast<double>(k + 1);
  }
  if (hits == 0.0) throw UndefinedMetricError("PR-AUC needs at least one positive");
  return total / hits;
}

double nll(std::span<const double> probs, std::span<const int> labels) {
  require_same_length(probs, labels);
  if (probs.empty()) throw UndefinedMetricError("NLL of an empty set");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    total -= labels[i] == 1 ? std::log(probs[i]) : std::log1p(-probs[i]);
  }
  return total / static_cast<double>(probs.size());
}

double relative_metric(double method_value, double vanilla_value, double oracle_value,
                       Orientation orientation) {
  if (oracle_value == vanilla_value) {
    throw UndefinedMetricError("relative metric: oracle equals vanilla");
  }
  if (orientation == Orientation::HigherIsBetter) {
    return (method_value - vanilla_value) / (oracle_value - vanilla_value) + 0.0;
  }
  return (vanilla_value - method_value) / (vanilla_value - oracle_value) + 0.0;
}

}  // namespace esdfm
