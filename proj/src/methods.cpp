#include "esdfm/methods.hpp"

#include <algorithm>
#include <atomic>
#include <string>

namespace esdfm {

namespace {

std::atomic<std::uint64_t> g_fnc_clamp_hits{0};

constexpr std::pair<MethodName, std::string_view> kNames[] = {
    {MethodName::Pretrained, "pretrained"}, {MethodName::Vanilla, "vanilla"},
    {MethodName::Oracle, "oracle"},         {MethodName::Dfm, "dfm"},
    {MethodName::Fsiw, "fsiw"},             {MethodName::Fnw, "fnw"},
    {MethodName::Fnc, "fnc"},               {MethodName::EsDfm, "es_dfm"},
};

std::vector<const Features*> feature_ptrs(std::span<const TrainingSample> samples) {
  std::vector<const Features*> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.features.get());
  return out;
}

}  // namespace

std::string_view to_string(MethodName name) {
  for (auto [n, text] : kNames) {
    if (n == name) return text;
  }
  return "unknown";
}

MethodName parse_method(std::string_view text) {
  for (auto [n, name] : kNames) {
    if (name == text) return n;
  }
  throw ConfigError("methods", "unknown method '" + std::string(text) + "'");
}

const std::vector<MethodName>& all_methods() {
  static const std::vector<MethodName> names = [] {
    std::vector<MethodName> out;
    for (auto [n, text] : kNames) out.push_back(n);
    return out;
  }();
  return names;
}

MethodSpec MethodSpec::standard(MethodName name, bool ideal_weights) {
  MethodSpec s;
  s.name = name;
  switch (name) {
    case MethodName::Pretrained:
      s.transform = TransformKind::None;
      s.weighting = Weighting::None;
      break;
    case MethodName::Vanilla: break;
    case MethodName::Oracle: s.transform = TransformKind::Oracle; break;
    case MethodName::Dfm: s.loss = LossKind::Dfm; break;
    case MethodName::Fsiw:
      s.transform = TransformKind::Fsiw;
      s.weighting = Weighting::Fsiw;
      break;
    case MethodName::Fnw:
      s.transform = TransformKind::Fnw;
      s.weighting = Weighting::FnwLaw;
      break;
    case MethodName::Fnc:
      s.transform = TransformKind::Fnw;
      s.calibration = Calibration::Fnc;
      break;
    case MethodName::EsDfm: s.weighting = ideal_weights ? Weighting::EsIdeal : Weighting::Es; break;
  }
  return s;
}

double fnw_weight(int observed_label, double p_hat) {
  if (observed_label != 0 && observed_label != 1) throw InputError("observed label must be 0 or 1");
  return observed_label == 1 ? 1.0 + p_hat : (1.0 + p_hat) * (1.0 - p_hat);
}

double fnc_calibrate(double q_hat) {
  if (!(q_hat >= 0.0)) throw NumericError("fnc_calibrate: negative or NaN input");
  constexpr double kLimit = 0.5 - 1e-7;
  if (q_hat > kLimit) {
    g_fnc_clamp_hits.fetch_add(1, std::memory_order_relaxed);
    q_hat = kLimit;
  }
  return q_hat / (1.0 - q_hat);
}

std::uint64_t fnc_clamp_hits() { return g_fnc_clamp_hits.load(); }

Method::Method(MethodSpec spec, MlpModel model, Estimators estimators, TrainConfig config,
               ElapsedPolicy policy)
    : spec_(spec),
      model_(std::move(model)),
      estimators_(std::move(estimators)),
      config_(config),
      policy_(std::move(policy)),
      adam_(AdamState<double>::zeros(model_.params().size())) {}

std::vector<TrainingSample> Method::training_stream(const std::vector<ClickEvent>& events,
                                                    Rng& rng) const {
  switch (spec_.transform) {
    case TransformKind::None: return {};
    case TransformKind::Es: return transform_es(events, policy_, rng);
    case TransformKind::Fnw: return transform_fnw(events, rng);
    case TransformKind::Fsiw: return transform_fsiw(events, policy_, rng);
    case TransformKind::Oracle: return transform_oracle(events);
  }
  return {};
}

Eigen::VectorXd Method::predict(FeatureBatch batch) const {
  Eigen::VectorXd p = forward(model_, batch, config_.clamp_eps);
  if (spec_.calibration == Calibration::Fnc) {
    p = p.unaryExpr([eps = config_.clamp_eps](double q) {
      return clamp_probability(fnc_calibrate(q), eps);
    });
  }
  return p;
}

Eigen::VectorXd Method::weights_for(std::span<const TrainingSample> samples,
                                    const Eigen::MatrixXd& logits) const {
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  switch (spec_.weighting) {
    case Weighting::None:
    case Weighting::Unit: break;
    case Weighting::Es: {
      const auto ptrs = feature_ptrs(samples);
      const Eigen::MatrixXd f = estimators_.dual_head->predict(FeatureBatch(ptrs));
      for (Eigen::Index i = 0; i < n; ++i) {
        w(i) = es_weight(samples[static_cast<std::size_t>(i)].observed_label, f(0, i), f(1, i));
      }
      break;
    }
    case Weighting::EsIdeal:
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        w(i) = ideal_weights(*estimators_.truth, policy_, *s.features, s.observed_label, s.click_ts);
      }
      break;
    case Weighting::Fsiw: {
      const auto ptrs = feature_ptrs(samples);
      const Eigen::MatrixXd f = estimators_.fsiw->predict(FeatureBatch(ptrs));
      for (Eigen::Index i = 0; i < n; ++i) {
        w(i) = fsiw_weight(samples[static_cast<std::size_t>(i)].observed_label, f(0, i), f(1, i));
      }
      break;
    }
    case Weighting::FnwLaw:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double p_hat = clamp_probability(sigmoid(logits(0, i)), config_.clamp_eps);
        w(i) = fnw_weight(samples[static_cast<std::size_t>(i)].observed_label, p_hat);
      }
      break;
    case Weighting::FnwTruth:
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        w(i) = fnw_weight(s.observed_label, estimators_.truth->cvr(*s.features, s.click_ts));
      }
      break;
  }
  return w;
}

Eigen::VectorXd Method::weights(std::span<const TrainingSample> samples) const {
  const auto ptrs = feature_ptrs(samples);
  return weights_for(samples, model_.forward(FeatureBatch(ptrs)));
}

void Method::train_bucket(std::span<const TrainingSample> samples) {
  if (spec_.weighting == Weighting::None || samples.empty()) return;
  for (std::size_t pass = 0; pass < config_.passes_per_bucket; ++pass) {
    for (std::size_t start = 0; start < samples.size(); start += config_.batch_size) {
      const auto chunk = samples.subspan(start, std::min(config_.batch_size, samples.size() - start));
      const auto ptrs = feature_ptrs(chunk);
      if (spec_.loss == LossKind::Dfm) {
        train_step_with(model_, FeatureBatch(ptrs), adam_, config_, [&](const Eigen::MatrixXd& z) {
          return dfm_loss_grad(z, chunk, config_.clamp_eps);
        });
        continue;
      }
      train_step_with(model_, FeatureBatch(ptrs), adam_, config_, [&](const Eigen::MatrixXd& z) {
        Eigen::VectorXd labels(static_cast<Eigen::Index>(chunk.size()));
        for (std::size_t i = 0; i < chunk.size(); ++i) {
          labels(static_cast<Eigen::Index>(i)) = chunk[i].observed_label;
        }
        return weighted_ce_grad(z, labels, weights_for(chunk, z), config_.clamp_eps);
      });
    }
  }
}

void Method::continue_estimator(std::span<const TwoHeadSample> matured) {
  if (spec_.weighting != Weighting::Es || matured.empty()) return;
  if (!own_dual_head_) {
    own_dual_head_ = std::make_shared<DualHeadEstimator>(*estimators_.dual_head);
    estimators_.dual_head = own_dual_head_;
    estimator_adam_ = AdamState<double>::zeros(own_dual_head_->net().params().size());
  }
  for (std::size_t start = 0; start < matured.size(); start += config_.batch_size) {
    own_dual_head_->train_step(
        matured.subspan(start, std::min(config_.batch_size, matured.size() - start)),
        estimator_adam_, config_);
  }
}

Method build_method(const MethodSpec& spec, const MlpModel& pretrained, const Estimators& estimators,
                    const TrainConfig& config, const ElapsedPolicy& policy) {
  config.validate();
  policy.validate();
  const std::string name(to_string(spec.name));
  auto require = [&](bool present, const char* what) {
    if (!present) throw ConfigError(name, std::string("method requires ") + what);
  };
  switch (spec.weighting) {
    case Weighting::Es: require(estimators.dual_head != nullptr, "a dual-head f_dp/f_rn estimator"); break;
    case Weighting::EsIdeal:
    case Weighting::FnwTruth: require(estimators.truth != nullptr, "synthetic ground truth"); break;
    case Weighting::Fsiw: require(estimators.fsiw != nullptr, "FSIW auxiliary estimators"); break;
    default: break;
  }
  if (spec.weighting == Weighting::EsIdeal) policy.dirac_constant();
  if (spec.loss == LossKind::Dfm) {
    require(estimators.dfm != nullptr, "a pre-trained DFM model");
    return Method(spec, estimators.dfm->net(), estimators, config, policy);
  }
  return Method(spec, pretrained, estimators, config, policy);
}

}  // namespace esdfm
