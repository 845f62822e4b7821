#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "esdfm/datagen.hpp"
#include "esdfm/learner.hpp"
#include "esdfm/relabel.hpp"
#include "esdfm/weighters.hpp"

namespace esdfm {

enum class MethodName { Pretrained, Vanilla, Oracle, Dfm, Fsiw, Fnw, Fnc, EsDfm };

std::string_view to_string(MethodName name);
/// Accepts the exact CLI identifiers: pretrained, vanilla, oracle, dfm, fsiw,
/// fnw, fnc, es_dfm.
MethodName parse_method(std::string_view text);
const std::vector<MethodName>& all_methods();

enum class TransformKind { None, Es, Fnw, Fsiw, Oracle };

enum class Weighting {
  None,      // no training at all
  Unit,
  Es,        // learned f_dp / f_rn
  EsIdeal,   // closed form from synthetic truth
  Fsiw,
  FnwLaw,    // self-weighting with the model's detached prediction
  FnwTruth,  // FNW law with the true p(y=1|x); reference for the ES reduction
};

enum class LossKind { WeightedCe, Dfm };
enum class Calibration { None, Fnc };

struct MethodSpec {
  MethodName name = MethodName::Vanilla;
  TransformKind transform = TransformKind::Es;
  Weighting weighting = Weighting::Unit;
  LossKind loss = LossKind::WeightedCe;
  Calibration calibration = Calibration::None;

  /// The published pairing for a method; `ideal_weights` swaps es_dfm's
  /// learned weights for the closed-form ones.
  static MethodSpec standard(MethodName name, bool ideal_weights = false);
};

/// FNW law: 1 + p for positives, (1 + p)(1 - p) for negatives.
double fnw_weight(int observed_label, double p_hat);

/// Inverts q = p / (1 + p). Inputs at or above 0.5 are clamped just below it.
double fnc_calibrate(double q_hat);
std::uint64_t fnc_clamp_hits();

struct Estimators {
  std::shared_ptr<const DualHeadEstimator> dual_head;
  std::shared_ptr<const FsiwEstimators> fsiw;
  std::shared_ptr<const DfmModel> dfm;
  std::shared_ptr<const SyntheticTruth> truth;
};

/// A compared method bound to its own copy of the model.
class Method {
 public:
  Method(MethodSpec spec, MlpModel model, Estimators estimators, TrainConfig config,
         ElapsedPolicy policy);

  const MethodSpec& spec() const { return spec_; }
  const MlpModel& model() const { return model_; }
  const ElapsedPolicy& policy() const { return policy_; }

  /// The stream this method trains on, built from ground-truth events.
  std::vector<TrainingSample> training_stream(const std::vector<ClickEvent>& events, Rng& rng) const;

  /// Served probabilities, calibrated where the method calibrates.
  Eigen::VectorXd predict(FeatureBatch batch) const;

  /// Per-sample loss weights under the current model state.
  Eigen::VectorXd weights(std::span<const TrainingSample> samples) const;

  /// Consumes one bucket of training samples in emit order.
  void train_bucket(std::span<const TrainingSample> samples);

  /// Continues training a private copy of the f_dp / f_rn estimator on
  /// samples whose labels have matured. No-op unless weighting is Es.
  void continue_estimator(std::span<const TwoHeadSample> matured);

 private:
  Eigen::VectorXd weights_for(std::span<const TrainingSample> samples,
                              const Eigen::MatrixXd& logits) const;

  MethodSpec spec_;
  MlpModel model_;
  Estimators estimators_;
  TrainConfig config_;
  ElapsedPolicy policy_;
  AdamState<double> adam_;
  std::shared_ptr<DualHeadEstimator> own_dual_head_;
  AdamState<double> estimator_adam_;
};

/// Binds a spec to the pretrained model and the estimators it needs. Throws
/// ConfigError naming the method when a required estimator is missing.
Method build_method(const MethodSpec& spec, const MlpModel& pretrained, const Estimators& estimators,
                    const TrainConfig& config, const ElapsedPolicy& policy);

}  // namespace esdfm
