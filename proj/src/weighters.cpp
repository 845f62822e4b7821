#include "esdfm/weighters.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace esdfm {

namespace {

std::atomic<std::uint64_t> g_fsiw_guard_hits{0};

void require_probability(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw NumericError(std::string(name) + " must lie in [0, 1], got " + std::to_string(v));
  }
}

void require_label(int label) {
  if (label != 0 && label != 1) throw InputError("observed label must be 0 or 1");
}

double masked_ce_head(double z, int label, double eps, double& dz) {
  const double s = sigmoid(z);
  dz = s - label;
  return cross_entropy(clamp_probability(s, eps), static_cast<double>(label));
}

}  // namespace

double es_weight(int observed_label, double f_dp, double f_rn) {
  require_label(observed_label);
  require_probability(f_dp, "f_dp");
  require_probability(f_rn, "f_rn");
  return observed_label == 1 ? 1.0 + f_dp : (1.0 + f_dp) * f_rn;
}

IdealTerms ideal_terms(double p1, double p_h_gt_e) {
  require_probability(p1, "p1");
  require_probability(p_h_gt_e, "p(h > e)");
  IdealTerms t;
  t.p_dp = p1 * p_h_gt_e;
  // p0 + p1 * s written as 1 - p1 * (1 - s): exact at s = 1 and s = 0.
  const double observed_negative = 1.0 - p1 * (1.0 - p_h_gt_e);
  t.p_rn = observed_negative > 0.0 ? (1.0 - p1) / observed_negative : 1.0;
  return t;
}

double ideal_delay_survival(const SyntheticTruth& truth, const ElapsedPolicy& policy,
                            const Features& x) {
  if (!truth.delay_rate_fn || !truth.cvr_fn) {
    throw UnsupportedError("ideal weights need synthetic ground truth");
  }
  return truth.delay_survival(x, policy.dirac_constant());
}

double ideal_weights(const SyntheticTruth& truth, const ElapsedPolicy& policy, const Features& x,
                     int observed_label, Seconds t) {
  const double s = ideal_delay_survival(truth, policy, x);
  const auto terms = ideal_terms(truth.cvr(x, t), s);
  return es_weight(observed_label, terms.p_dp, terms.p_rn);
}

ObservedDistribution es_observed_distribution(double p1, double p_h_gt_e) {
  const double norm = 1.0 + p1 * p_h_gt_e;
  return {((1.0 - p1) + p1 * p_h_gt_e) / norm, p1 / norm};
}

double importance_identity_check(const SyntheticTruth& truth, const ElapsedPolicy& policy,
                                 const DiscreteSpace& space) {
  std::vector<std::pair<double, double>> losses{{1.0, 1.0}, {1.0, 0.0}, {0.0, 1.0}};
  for (double f : {0.05, 0.3, 0.7, 0.95}) losses.emplace_back(-std::log1p(-f), -std::log(f));
  double worst = 0.0;
  for (std::size_t k = 0; k < space.cells; ++k) {
    const auto x = Features{{static_cast<std::int32_t>(k)}, {}};
    const double p1 = truth.cvr(x);
    const double s = ideal_delay_survival(truth, policy, x);
    const auto q = es_observed_distribution(p1, s);
    const double w0 = ideal_weights(truth, policy, x, 0);
    const double w1 = ideal_weights(truth, policy, x, 1);
    for (auto [l0, l1] : losses) {
      const double weighted = q.q0 * w0 * l0 + q.q1 * w1 * l1;
      const double ideal = (1.0 - p1) * l0 + p1 * l1;
      worst = std::max(worst, std::abs(weighted - ideal));
    }
  }
  return worst;
}

double fsiw_weight(int observed_label, double f_obs, double f_tn, double eps) {
  require_label(observed_label);
  require_probability(f_obs, "f_obs");
  require_probability(f_tn, "f_tn");
  if (observed_label == 0) return f_tn;
  if (f_obs < eps) {
    g_fsiw_guard_hits.fetch_add(1, std::memory_order_relaxed);
    return 1.0 / eps;
  }
  return 1.0 / f_obs;
}

std::uint64_t fsiw_guard_hits() { return g_fsiw_guard_hits.load(); }

double analytic_fixed_point(double p1, double p_h_gt_e, double f_rn_value) {
  require_probability(p1, "p1");
  require_probability(p_h_gt_e, "p(h > e)");
  require_probability(f_rn_value, "f_rn");
  const double denom = p1 + (1.0 - p1 + p1 * p_h_gt_e) * f_rn_value;
  if (denom == 0.0) throw NumericError("analytic fixed point: zero denominator");
  return p1 / denom;
}

std::vector<DpRnSample> build_dp_rn_dataset(const std::vector<ClickEvent>& stream,
                                            const ElapsedPolicy& policy,
                                            Seconds attribution_window, Rng& rng) {
  policy.validate();
  std::vector<DpRnSample> out;
  out.reserve(stream.size());
  for (const auto& ev : stream) {
    const Seconds e = draw_elapsed(ev, policy, rng);
    const bool observed = ev.converted() && ev.delay() <= e;
    const bool attributed = ev.converted() && ev.delay() <= attribution_window;
    DpRnSample s;
    s.features = ev.features;
    s.dp_label = attributed && !observed ? 1 : 0;
    s.rn_mask = observed ? 0 : 1;
    s.rn_label = attributed ? 0 : 1;
    out.push_back(std::move(s));
  }
  return out;
}

TwoHeadSample to_two_head(const DpRnSample& s) {
  return {s.features, {s.dp_label, s.rn_label}, {1, s.rn_mask}};
}

std::vector<TwoHeadSample> build_fsiw_dataset(const std::vector<ClickEvent>& stream,
                                              const ElapsedPolicy& policy,
                                              Seconds attribution_window, Rng& rng) {
  policy.validate();
  std::vector<TwoHeadSample> out;
  out.reserve(stream.size());
  for (const auto& ev : stream) {
    const Seconds e = draw_elapsed(ev, policy, rng);
    const bool observed = ev.converted() && ev.delay() <= e;
    const bool attributed = ev.converted() && ev.delay() <= attribution_window;
    TwoHeadSample s;
    s.features = ev.features;
    s.label = {observed ? 1 : 0, attributed ? 0 : 1};
    s.mask = {attributed ? 1 : 0, observed ? 0 : 1};
    out.push_back(std::move(s));
  }
  return out;
}

TwoHeadEstimator::TwoHeadEstimator(ArchSpec arch, std::uint64_t seed) {
  arch.n_outputs = 2;
  net_ = MlpModel(std::move(arch), seed);
}

TwoHeadEstimator::TwoHeadEstimator(MlpModel net) : net_(std::move(net)) {
  if (net_.arch().n_outputs != 2) throw ConfigError("n_outputs", "two-head estimator needs 2 outputs");
}

Eigen::MatrixXd TwoHeadEstimator::predict(FeatureBatch batch) const {
  return net_.forward(batch).unaryExpr([](double z) { return clamp_probability(sigmoid(z), 1e-7); });
}

std::pair<double, double> TwoHeadEstimator::predict(const Features& x) const {
  const Features* one[] = {&x};
  const Eigen::MatrixXd p = predict(FeatureBatch(one));
  return {p(0, 0), p(1, 0)};
}

StepStats TwoHeadEstimator::train_step(std::span<const TwoHeadSample> batch,
                                       AdamState<double>& adam, const TrainConfig& config) {
  std::vector<const Features*> features;
  features.reserve(batch.size());
  for (const auto& s : batch) features.push_back(s.features.get());
  return train_step_with(net_, FeatureBatch(features), adam, config, [&](const Eigen::MatrixXd& z) {
    LossGrad lg;
    lg.dlogits = Eigen::MatrixXd::Zero(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
      const auto& s = batch[static_cast<std::size_t>(i)];
      for (Eigen::Index h = 0; h < 2; ++h) {
        if (!s.mask[static_cast<std::size_t>(h)]) continue;
        double dz = 0.0;
        lg.loss += masked_ce_head(z(h, i), s.label[static_cast<std::size_t>(h)], config.clamp_eps, dz);
        lg.dlogits(h, i) = dz;
      }
    }
    return lg;
  });
}

void TwoHeadEstimator::fit(const std::vector<TwoHeadSample>& data, const TrainConfig& config,
                           std::size_t epochs) {
  config.validate();
  Rng rng(config.seed);
  auto adam = AdamState<double>::zeros(net_.params().size());
  std::vector<TwoHeadSample> batch;
  for_each_minibatch(data.size(), config.batch_size, epochs, rng, [&](std::span<const std::size_t> idx) {
    batch.clear();
    for (auto i : idx) batch.push_back(data[i]);
    train_step(batch, adam, config);
  });
}

void DualHeadEstimator::fit(const std::vector<DpRnSample>& data, const TrainConfig& config,
                            std::size_t epochs) {
  std::vector<TwoHeadSample> converted;
  converted.reserve(data.size());
  for (const auto& s : data) converted.push_back(to_two_head(s));
  TwoHeadEstimator::fit(converted, config, epochs);
}

DfmTerms dfm_terms(double logit, double log_rate, bool converted, Seconds time, double eps) {
  const double rate = std::exp(log_rate);
  if (!std::isfinite(rate) || !std::isfinite(logit)) {
    throw NumericError("delayed feedback model produced a non-finite rate");
  }
  const double p = sigmoid(logit);
  DfmTerms t;
  if (converted) {
    t.loss = -(std::log(clamp_probability(p, eps)) + log_rate - rate * time);
    t.d_logit = p - 1.0;
    t.d_log_rate = rate * time - 1.0;
    return t;
  }
  const double survival = std::exp(-rate * time);
  const double q = sigmoid(-logit);  // 1 - p without cancellation
  const double observed_negative = std::max(q + p * survival, std::numeric_limits<double>::min());
  t.loss = -std::log(observed_negative);
  t.d_logit = p * q * (1.0 - survival) / observed_negative;
  t.d_log_rate = p * rate * time * survival / observed_negative;
  return t;
}

namespace {

Seconds dfm_time(const TrainingSample& s) {
  if (s.observed_label == 1) {
    if (!s.delay) throw InputError("converted sample without an observed delay");
    return *s.delay;
  }
  return s.elapsed;
}

}  // namespace

LossGrad dfm_loss_grad(const Eigen::MatrixXd& logits, std::span<const TrainingSample> batch,
                       double eps) {
  LossGrad lg;
  lg.dlogits = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const auto& s = batch[static_cast<std::size_t>(i)];
    const auto t = dfm_terms(logits(0, i), logits(1, i), s.observed_label == 1, dfm_time(s), eps);
    lg.loss += t.loss;
    lg.dlogits(0, i) = t.d_logit;
    lg.dlogits(1, i) = t.d_log_rate;
  }
  return lg;
}

DfmModel::DfmModel(ArchSpec arch, std::uint64_t seed) {
  arch.n_outputs = 2;
  net_ = MlpModel(std::move(arch), seed);
}

DfmModel::DfmModel(MlpModel net) : net_(std::move(net)) {
  if (net_.arch().n_outputs != 2) throw ConfigError("n_outputs", "DFM model needs 2 outputs");
}

double DfmModel::cvr(const Features& x) const {
  const Features* one[] = {&x};
  return clamp_probability(sigmoid(net_.forward(FeatureBatch(one))(0, 0)), 1e-7);
}

double DfmModel::rate(const Features& x) const {
  const Features* one[] = {&x};
  return std::exp(net_.forward(FeatureBatch(one))(1, 0));
}

void DfmModel::set_base_rate(double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw ConfigError("rate", "base rate must be positive");
  net_.bias(net_.n_layers() - 1)(1, 0) = std::log(rate);
}

StepStats DfmModel::train_step(std::span<const TrainingSample> batch, AdamState<double>& adam,
                               const TrainConfig& config) {
  std::vector<const Features*> features;
  features.reserve(batch.size());
  for (const auto& s : batch) features.push_back(s.features.get());
  return train_step_with(net_, FeatureBatch(features), adam, config, [&](const Eigen::MatrixXd& z) {
    return dfm_loss_grad(z, batch, config.clamp_eps);
  });
}

void DfmModel::fit(const std::vector<TrainingSample>& data, const TrainConfig& config,
                   std::size_t epochs) {
  config.validate();
  Rng rng(config.seed);
  auto adam = AdamState<double>::zeros(net_.params().size());
  std::vector<TrainingSample> batch;
  for_each_minibatch(data.size(), config.batch_size, epochs, rng, [&](std::span<const std::size_t> idx) {
    batch.clear();
    for (auto i : idx) batch.push_back(data[i]);
    train_step(batch, adam, config);
  });
}

double dfm_loss(const DfmModel& model, const TrainingSample& sample, double eps) {
  const Features* one[] = {sample.features.get()};
  const Eigen::MatrixXd z = model.net().forward(FeatureBatch(one));
  return dfm_terms(z(0, 0), z(1, 0), sample.observed_label == 1, dfm_time(sample), eps).loss;
}

std::vector<TrainingSample> dfm_pretrain_samples(const std::vector<ClickEvent>& stream,
                                                 Seconds attribution_window) {
  std::vector<TrainingSample> out;
  out.reserve(stream.size());
  for (const auto& ev : stream) {
    TrainingSample s;
    s.source_id = ev.id;
    s.click_ts = ev.click_ts;
    s.features = ev.features;
    if (ev.converted() && ev.delay() <= attribution_window) {
      s.observed_label = 1;
      s.kind = SampleKind::ObservedPositive;
      s.delay = ev.delay();
      s.elapsed = attribution_window;
    } else {
      s.kind = SampleKind::RealNegative;
      s.elapsed = attribution_window;
    }
    s.emit_ts = ev.click_ts + attribution_window;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace esdfm
