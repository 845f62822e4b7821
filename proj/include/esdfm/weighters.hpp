#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <utility>
#include <vector>

#include "esdfm/datagen.hpp"
#include "esdfm/learner.hpp"
#include "esdfm/relabel.hpp"

namespace esdfm {

/// Importance weight of an elapsed-sampled sample from the delayed-positive
/// probability f_dp and the real-negative probability f_rn. Lies in [0, 2].
double es_weight(int observed_label, double f_dp, double f_rn);

struct IdealTerms {
  double p_dp = 0.0;
  double p_rn = 1.0;
};

/// p_dp = p1 * s and p_rn = p0 / (p0 + p1 * s) with s = p(h > e | x, y=1).
IdealTerms ideal_terms(double p1, double p_h_gt_e);

/// Survival p(h > c | x, y=1) of the true delay under a Dirac policy.
double ideal_delay_survival(const SyntheticTruth& truth, const ElapsedPolicy& policy,
                            const Features& x);

/// Exact ES importance weight from synthetic ground truth (Dirac policies only).
double ideal_weights(const SyntheticTruth& truth, const ElapsedPolicy& policy, const Features& x,
                     int observed_label, Seconds t = 0.0);

/// Largest |E_q[w l] - E_p[l]| over all cells of a discrete truth and a fixed
/// family of bounded per-label losses, using closed-form observed
/// distributions of the elapsed-sampled stream.
double importance_identity_check(const SyntheticTruth& truth, const ElapsedPolicy& policy,
                                 const DiscreteSpace& space);

/// Closed-form observed label distribution of the ES stream for one cell.
struct ObservedDistribution {
  double q0 = 1.0;
  double q1 = 0.0;
};
ObservedDistribution es_observed_distribution(double p1, double p_h_gt_e);

inline constexpr double kFsiwReciprocalGuard = 1e-3;

/// Feedback-shift weight: 1 / f_obs for positives, f_tn for negatives.
double fsiw_weight(int observed_label, double f_obs, double f_tn,
                   double eps = kFsiwReciprocalGuard);
/// Number of times the reciprocal guard of fsiw_weight fired in this process.
std::uint64_t fsiw_guard_hits();

/// f(x) = p1 / (p1 + (1 - p1 + p1 * s) * f_rn): the limit the CVR model reaches
/// when trained with an inexact real-negative estimate f_rn.
double analytic_fixed_point(double p1, double p_h_gt_e, double f_rn_value);

/// One sample of the dual-classifier dataset.
struct DpRnSample {
  FeatureRef features;
  int dp_label = 0;
  int rn_label = 0;
  int rn_mask = 1;
};

std::vector<DpRnSample> build_dp_rn_dataset(const std::vector<ClickEvent>& stream,
                                            const ElapsedPolicy& policy,
                                            Seconds attribution_window, Rng& rng);

/// Sample for a network with two independently masked sigmoid heads.
struct TwoHeadSample {
  FeatureRef features;
  std::array<int, 2> label{};
  std::array<int, 2> mask{1, 1};
};

TwoHeadSample to_two_head(const DpRnSample& s);

/// Shared trunk with two sigmoid heads trained by masked cross-entropy.
class TwoHeadEstimator {
 public:
  TwoHeadEstimator() = default;
  TwoHeadEstimator(ArchSpec arch, std::uint64_t seed);
  explicit TwoHeadEstimator(MlpModel net);

  /// Probabilities of both heads, one row per head.
  Eigen::MatrixXd predict(FeatureBatch batch) const;
  std::pair<double, double> predict(const Features& x) const;

  void fit(const std::vector<TwoHeadSample>& data, const TrainConfig& config, std::size_t epochs);
  StepStats train_step(std::span<const TwoHeadSample> batch, AdamState<double>& adam,
                       const TrainConfig& config);

  const MlpModel& net() const { return net_; }
  MlpModel& net() { return net_; }

 private:
  MlpModel net_;
};

/// Head 0 = f_dp, head 1 = f_rn.
class DualHeadEstimator : public TwoHeadEstimator {
 public:
  using TwoHeadEstimator::TwoHeadEstimator;
  void fit(const std::vector<DpRnSample>& data, const TrainConfig& config, std::size_t epochs);
};

/// FSIW auxiliary estimators. Head 0 = f_obs estimates p(h <= e | x, y=1);
/// head 1 = f_tn estimates p(y=0|x) / q(y=0|x).
class FsiwEstimators : public TwoHeadEstimator {
 public:
  using TwoHeadEstimator::TwoHeadEstimator;
};

std::vector<TwoHeadSample> build_fsiw_dataset(const std::vector<ClickEvent>& stream,
                                              const ElapsedPolicy& policy,
                                              Seconds attribution_window, Rng& rng);

/// Delayed feedback model terms for one sample, given the CVR logit z and
/// log-rate r = log lambda.
struct DfmTerms {
  double loss = 0.0;
  double d_logit = 0.0;
  double d_log_rate = 0.0;
};

/// Converted after `time` seconds: -[log p + log lambda - lambda * time].
/// Unconverted after `time` seconds: -log[1 - p + p * exp(-lambda * time)].
DfmTerms dfm_terms(double logit, double log_rate, bool converted, Seconds time, double eps = 1e-7);

/// CVR head (output 0, sigmoid) and delay head (output 1, log lambda).
class DfmModel {
 public:
  DfmModel() = default;
  DfmModel(ArchSpec arch, std::uint64_t seed);
  explicit DfmModel(MlpModel net);

  double cvr(const Features& x) const;
  double rate(const Features& x) const;

  /// Sets the delay-head bias so an untrained net predicts `rate` everywhere.
  void set_base_rate(double rate);

  /// Sum of dfm_terms losses over samples; converted samples use their delay,
  /// unconverted ones their elapsed time.
  StepStats train_step(std::span<const TrainingSample> batch, AdamState<double>& adam,
                       const TrainConfig& config);
  void fit(const std::vector<TrainingSample>& data, const TrainConfig& config, std::size_t epochs);

  const MlpModel& net() const { return net_; }
  MlpModel& net() { return net_; }

 private:
  MlpModel net_;
};

double dfm_loss(const DfmModel& model, const TrainingSample& sample, double eps = 1e-7);

/// Fully attributed view of a stream used to pre-train the DFM model:
/// converters carry their delay, others are censored at the window.
std::vector<TrainingSample> dfm_pretrain_samples(const std::vector<ClickEvent>& stream,
                                                 Seconds attribution_window);

/// DFM logit gradient helper shared by training and tests.
LossGrad dfm_loss_grad(const Eigen::MatrixXd& logits, std::span<const TrainingSample> batch,
                       double eps);

}  // namespace esdfm
