#include "doctest.h"
#include "esdfm/protocol.hpp"
#include "support.hpp"

using namespace esdfm;

namespace {

struct Setup {
  std::vector<ClickEvent> events;
  MlpModel model;
  Setup() : model(ArchSpec{{3}, 0, 2, {4}, 1}, 2) {
    GenConfig cfg;
    cfg.n_events = 6000;
    cfg.horizon = 6 * 3600.0;
    cfg.feature_space = DiscreteSpace{3};
    cfg.seed = 4;
    events = synth_stream(cfg, SyntheticTruth::discrete({0.1, 0.3, 0.6}, {1.0 / 600, 1.0 / 600, 1.0 / 600}));
  }
};

}  // namespace

TEST_CASE("bucket misalignment is a protocol error") {
  Setup s;
  auto m = build_method(MethodSpec::standard(MethodName::Oracle), s.model, {}, TrainConfig{}, ElapsedPolicy::dirac(0));
  const auto eval = bucketize(s.events, 3600.0, 0.0, std::size_t{6});
  const auto train = bucketize(transform_oracle(s.events), 3600.0, 0.0, std::size_t{5});
  CHECK_THROWS_AS(run_streaming_experiment(m, train, eval), ProtocolError);
}

TEST_CASE("single bucket gives one record") {
  Setup s;
  auto m = build_method(MethodSpec::standard(MethodName::Oracle), s.model, {}, TrainConfig{}, ElapsedPolicy::dirac(0));
  const auto r = run_streaming_experiment(m, {transform_oracle(s.events)}, {s.events});
  CHECK(r.buckets.size() == 1);
  CHECK(r.pooled.n_eval == s.events.size());
}

TEST_CASE("each bucket is evaluated before it is trained on") {
  Setup s;
  auto m = build_method(MethodSpec::standard(MethodName::Oracle), s.model, {}, TrainConfig{}, ElapsedPolicy::dirac(0));
  const auto eval = bucketize(s.events, 3600.0, 0.0, std::size_t{6});
  const auto train = bucketize(transform_oracle(s.events), 3600.0, 0.0, std::size_t{6});
  const auto r = run_streaming_experiment(m, train, eval);
  // Bucket 0 must be scored by the untouched model.
  std::vector<double> probs;
  std::vector<int> labels;
  for (const auto& e : eval[0]) {
    probs.push_back(forward(s.model, *e.features));
    labels.push_back(e.converted());
  }
  CHECK(r.buckets[0].auc == auc(probs, labels));
  CHECK(r.buckets[0].nll == nll(probs, labels));
  CHECK(m.model().params() != s.model.params());
}

TEST_CASE("pooled metrics are computed over all predictions") {
  Setup s;
  auto m = build_method(MethodSpec::standard(MethodName::Pretrained), s.model, {}, TrainConfig{}, ElapsedPolicy::dirac(0));
  const auto eval = bucketize(s.events, 3600.0, 0.0, std::size_t{6});
  const auto r = run_streaming_experiment(m, std::vector<Bucket<TrainingSample>>(6), eval);
  std::vector<double> probs;
  std::vector<int> labels;
  std::size_t n = 0;
  double weighted_nll = 0.0;
  for (std::size_t b = 0; b < eval.size(); ++b) {
    CHECK(r.buckets[b].n_eval == eval[b].size());
    n += r.buckets[b].n_eval;
    weighted_nll += r.buckets[b].nll * static_cast<double>(r.buckets[b].n_eval);
    for (const auto& e : eval[b]) {
      probs.push_back(forward(s.model, *e.features));
      labels.push_back(e.converted());
    }
  }
  CHECK(r.pooled.n_eval == n);
  CHECK(r.pooled.auc == auc(probs, labels));
  CHECK(r.pooled.nll == doctest::Approx(weighted_nll / static_cast<double>(n)).epsilon(1e-12));
  CHECK(m.model().params() == s.model.params());
}

TEST_CASE("single-class buckets report NaN") {
  const std::vector<double> p{0.2, 0.3};
  const std::vector<int> y{0, 0};
  const auto m = evaluate(p, y);
  CHECK(std::isnan(m.auc));
  CHECK(std::isnan(m.pr_auc));
  CHECK(std::isfinite(m.nll));
}

TEST_CASE("relative metrics for vanilla and oracle are 0 and 1") {
  const PooledMetrics v{10, 0.70, 0.40, 0.50};
  const PooledMetrics o{10, 0.75, 0.45, 0.45};
  const auto rv = relative_metrics(v, v, o);
  const auto ro = relative_metrics(o, v, o);
  CHECK(rv.r_auc == 0.0);
  CHECK(rv.r_nll == 0.0);
  CHECK(ro.r_auc == 1.0);
  CHECK(ro.r_pr_auc == 1.0);
  CHECK(ro.r_nll == 1.0);
  CHECK(std::isnan(relative_metrics(v, v, v).r_auc));
}
