#pragma once

#include <algorithm>
#include <cmath>
#include <iosfwd>
#include <span>
#include <sstream>
#include <vector>

#include "esdfm/errors.hpp"
#include "esdfm/mlp.hpp"

namespace esdfm {

using MlpModel = Mlp<double>;

struct TrainConfig {
  double learning_rate = 1e-3;
  double l2_strength = 1e-6;
  std::size_t batch_size = 1024;
  double clamp_eps = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Passes over each streaming bucket.
  std::size_t passes_per_bucket = 1;

  void validate() const;
  AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_epsilon}; }
};

/// CVR network: the given architecture with a single output.
MlpModel make_cvr_model(ArchSpec arch, std::uint64_t seed);

template <typename Scalar>
VectorX<Scalar> probabilities(const MatrixX<Scalar>& logits_row, double eps) {
  return logits_row.row(0).transpose().unaryExpr(
      [eps](Scalar z) { return clamp_probability(sigmoid(z), eps); });
}

/// Clamped probability of head 0 for each sample.
template <typename Scalar>
VectorX<Scalar> forward(const Mlp<Scalar>& model, FeatureBatch batch, double eps = 1e-7) {
  return probabilities<Scalar>(model.forward(batch), eps);
}

template <typename Scalar>
Scalar forward(const Mlp<Scalar>& model, const Features& x, double eps = 1e-7) {
  const Features* one[] = {&x};
  return forward(model, FeatureBatch(one), eps)(0);
}

template <typename Scalar>
Scalar cross_entropy(Scalar p, Scalar y) {
  return -(y * std::log(p) + (Scalar(1) - y) * std::log1p(-p));
}

template <typename Scalar>
void check_weights(std::span<const Scalar> weights) {
  for (Scalar w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      std::ostringstream msg;
      msg << "sample weight must be finite and non-negative, got " << w;
      throw NumericError(msg.str());
    }
  }
}

/// -sum_i w_i [y_i log p_i + (1 - y_i) log(1 - p_i)].
template <typename Scalar>
Scalar weighted_ce(const VectorX<Scalar>& probs, const VectorX<Scalar>& labels,
                   const VectorX<Scalar>& weights) {
  if (probs.size() != labels.size() || probs.size() != weights.size()) {
    throw InputError("weighted_ce: length mismatch");
  }
  check_weights<Scalar>(std::span<const Scalar>(weights.data(), static_cast<std::size_t>(weights.size())));
  Scalar total = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (weights(i) == Scalar(0)) continue;
    total += weights(i) * cross_entropy(probs(i), labels(i));
  }
  return total;
}

template <typename Scalar>
Scalar l2_penalty(const Mlp<Scalar>& model, double strength) {
  return static_cast<Scalar>(strength) *
         model.params().cwiseAbs2().cwiseProduct(model.l2_mask()).sum();
}

struct WeightedBatch {
  std::vector<const Features*> features;
  Eigen::VectorXd labels;
  Eigen::VectorXd weights;

  std::size_t size() const { return features.size(); }
  void validate() const;
};

/// Objective minimized by train_step: mean weighted CE plus L2.
double batch_objective(const MlpModel& model, const WeightedBatch& batch, const TrainConfig& config);

/// Per-step loss and its gradient with respect to the logits.
struct LossGrad {
  double loss = 0.0;  // summed over the batch
  Eigen::MatrixXd dlogits;
};

struct StepStats {
  double objective = 0.0;
  double grad_norm = 0.0;
};

/// One Adam step on mean(loss) + l2 * |theta|^2, for any loss over the logits.
template <typename LossFn>
StepStats train_step_with(MlpModel& model, FeatureBatch batch, AdamState<double>& adam,
                          const TrainConfig& config, LossFn&& loss_fn) {
  if (batch.empty()) return {};
  MlpModel::Cache cache;
  const Eigen::MatrixXd logits = model.forward(batch, &cache);
  LossGrad lg = loss_fn(logits);
  const double scale = 1.0 / static_cast<double>(batch.size());
  Eigen::VectorXd grad = model.backward(cache, lg.dlogits * scale);
  grad += (2.0 * config.l2_strength) * model.params().cwiseProduct(model.l2_mask());
  StepStats stats{lg.loss * scale + l2_penalty(model, config.l2_strength), grad.norm()};
  if (!std::isfinite(stats.objective) || !std::isfinite(stats.grad_norm)) {
    std::ostringstream msg;
    msg << "non-finite training loss at adam step " << adam.step << ": objective="
        << stats.objective << " grad_norm=" << stats.grad_norm
        << " max|logit|=" << logits.cwiseAbs().maxCoeff();
    throw TrainingError(msg.str());
  }
  adam_update(model.params(), grad, adam, config.adam());
  return stats;
}

/// Weighted cross-entropy loss and logit gradient w_i (sigmoid(z_i) - y_i).
LossGrad weighted_ce_grad(const Eigen::MatrixXd& logits, const Eigen::VectorXd& labels,
                          const Eigen::VectorXd& weights, double eps);

StepStats train_step(MlpModel& model, const WeightedBatch& batch, AdamState<double>& adam,
                     const TrainConfig& config);

/// Calls fn(indices) for consecutive minibatches of a fresh permutation of
/// [0, n) in every epoch.
template <typename Fn>
void for_each_minibatch(std::size_t n, std::size_t batch_size, std::size_t epochs, Rng& rng, Fn&& fn) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t len = std::min(batch_size, n - start);
      fn(std::span<const std::size_t>(order.data() + start, len));
    }
  }
}

struct LabeledExample {
  const Features* features = nullptr;
  double label = 0.0;
  double weight = 1.0;
};

/// Shuffled minibatch Adam over `epochs` passes; returns the last objective.
double fit(MlpModel& model, const std::vector<LabeledExample>& data, const TrainConfig& config,
           std::size_t epochs, AdamState<double>& adam);

/// Text checkpoint with a version tag; parameters round-trip bit-exactly.
void save_checkpoint(std::ostream& out, const MlpModel& model);
MlpModel load_checkpoint(std::istream& in);

}  // namespace esdfm
