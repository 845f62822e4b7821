#include "doctest.h"
#include "esdfm/methods.hpp"
#include "support.hpp"

using namespace esdfm;
using esdfm::test::event;

namespace {

ArchSpec tiny_arch(std::size_t cells) { return ArchSpec{{cells}, 0, 2, {4}, 1}; }

std::vector<ClickEvent> stream(std::size_t n, std::uint64_t seed) {
  GenConfig cfg;
  cfg.n_events = n;
  cfg.seed = seed;
  cfg.feature_space = DiscreteSpace{3};
  return synth_stream(cfg, SyntheticTruth::discrete({0.1, 0.3, 0.6}, {1.0 / 600, 1.0 / 1200, 1.0 / 2400}));
}

}  // namespace

TEST_CASE("method names round-trip") {
  for (auto m : all_methods()) CHECK(parse_method(to_string(m)) == m);
  CHECK(all_methods().size() == 8);
  CHECK(to_string(MethodName::EsDfm) == "es_dfm");
  CHECK_THROWS_AS(parse_method("esdfm"), ConfigError);
}

TEST_CASE("standard pairings") {
  CHECK(MethodSpec::standard(MethodName::Pretrained).weighting == Weighting::None);
  CHECK(MethodSpec::standard(MethodName::Oracle).transform == TransformKind::Oracle);
  CHECK(MethodSpec::standard(MethodName::Oracle).weighting == Weighting::Unit);
  CHECK(MethodSpec::standard(MethodName::EsDfm).transform == TransformKind::Es);
  CHECK(MethodSpec::standard(MethodName::EsDfm).weighting == Weighting::Es);
  CHECK(MethodSpec::standard(MethodName::EsDfm, true).weighting == Weighting::EsIdeal);
  CHECK(MethodSpec::standard(MethodName::Fnw).transform == TransformKind::Fnw);
  CHECK(MethodSpec::standard(MethodName::Fnw).weighting == Weighting::FnwLaw);
  CHECK(MethodSpec::standard(MethodName::Fnc).weighting == Weighting::Unit);
  CHECK(MethodSpec::standard(MethodName::Fnc).calibration == Calibration::Fnc);
  CHECK(MethodSpec::standard(MethodName::Dfm).loss == LossKind::Dfm);
  CHECK(MethodSpec::standard(MethodName::Vanilla).transform == TransformKind::Es);
  CHECK(MethodSpec::standard(MethodName::Vanilla).weighting == Weighting::Unit);
}

TEST_CASE("fnw weight") {
  CHECK(fnw_weight(1, 0.0) == 1.0);
  CHECK(fnw_weight(0, 0.0) == 1.0);
  CHECK(fnw_weight(1, 0.5) == 1.5);
  CHECK(fnw_weight(0, 0.5) == 0.75);
  const auto truth = SyntheticTruth::discrete({0.37}, {1.0});
  const Features x{{0}, {}};
  for (int y : {0, 1}) {
    CHECK(fnw_weight(y, 0.37) == doctest::Approx(ideal_weights(truth, ElapsedPolicy::dirac(0), x, y)).epsilon(1e-15));
  }
}

TEST_CASE("fnc calibration inverts p / (1 + p)") {
  CHECK(fnc_calibrate(1.0 / 3.0) == doctest::Approx(0.5));
  CHECK(fnc_calibrate(0.0) == 0.0);
  for (int i = 1; i <= 9; ++i) {
    const double p = 0.1 * i;
    CHECK(std::abs(fnc_calibrate(p / (1 + p)) - p) < 1e-12);
  }
  const auto before = fnc_clamp_hits();
  CHECK(std::isfinite(fnc_calibrate(0.7)));
  CHECK(fnc_clamp_hits() == before + 1);
}

TEST_CASE("build_method requires estimators") {
  const MlpModel m(tiny_arch(3), 1);
  const auto pol = ElapsedPolicy::dirac(600);
  for (auto name : {MethodName::EsDfm, MethodName::Fsiw, MethodName::Dfm}) {
    try {
      build_method(MethodSpec::standard(name), m, {}, TrainConfig{}, pol);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == to_string(name));
    }
  }
  CHECK_THROWS_AS(build_method(MethodSpec::standard(MethodName::EsDfm, true), m, {}, TrainConfig{}, pol), ConfigError);
}

TEST_CASE("pretrained never changes") {
  const auto s = stream(3000, 1);
  const MlpModel m(tiny_arch(3), 1);
  auto method = build_method(MethodSpec::standard(MethodName::Pretrained), m, {}, TrainConfig{}, ElapsedPolicy::dirac(0));
  Rng rng(1);
  const auto train = transform_oracle(s);
  method.train_bucket(train);
  CHECK(method.model().params() == m.params());
  CHECK(method.training_stream(s, rng).empty());
}

TEST_CASE("es_dfm ideal weights at c = 0 equal fnw with the true cvr") {
  const auto s = stream(4000, 2);
  Estimators est;
  est.truth = std::make_shared<const SyntheticTruth>(
      SyntheticTruth::discrete({0.1, 0.3, 0.6}, {1.0 / 600, 1.0 / 1200, 1.0 / 2400}));
  const MlpModel m(tiny_arch(3), 1);
  const auto pol = ElapsedPolicy::dirac(0);
  auto es = build_method(MethodSpec::standard(MethodName::EsDfm, true), m, est, TrainConfig{}, pol);
  MethodSpec fnw_truth = MethodSpec::standard(MethodName::Fnw);
  fnw_truth.weighting = Weighting::FnwTruth;
  auto fnw = build_method(fnw_truth, m, est, TrainConfig{}, pol);
  Rng a(1), b(1);
  const auto samples = es.training_stream(s, a);
  CHECK(samples == fnw.training_stream(s, b));
  const Eigen::VectorXd we = es.weights(samples);
  const Eigen::VectorXd wf = fnw.weights(samples);
  CHECK((we - wf).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fnw weights use the current prediction") {
  const MlpModel m(tiny_arch(3), 4);
  auto method = build_method(MethodSpec::standard(MethodName::Fnw), m, {}, TrainConfig{}, ElapsedPolicy::dirac(0));
  Rng rng(1);
  const auto samples = method.training_stream(stream(50, 3), rng);
  const Eigen::VectorXd w = method.weights(samples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double p = forward(m, *samples[i].features);
    CHECK(w(static_cast<Eigen::Index>(i)) == doctest::Approx(fnw_weight(samples[i].observed_label, p)).epsilon(1e-15));
  }
}

TEST_CASE("fnc serves calibrated predictions") {
  const MlpModel m(tiny_arch(3), 4);
  auto method = build_method(MethodSpec::standard(MethodName::Fnc), m, {}, TrainConfig{}, ElapsedPolicy::dirac(0));
  const Features x{{1}, {}};
  const Features* one[] = {&x};
  const double raw = forward(m, x);
  CHECK(method.predict(FeatureBatch(one))(0) == doctest::Approx(fnc_calibrate(raw)).epsilon(1e-15));
}

TEST_CASE("continue_estimator does not touch the shared estimator") {
  ArchSpec two = tiny_arch(3);
  two.n_outputs = 2;
  Estimators est;
  est.dual_head = std::make_shared<const DualHeadEstimator>(two, 5);
  const Eigen::VectorXd before = est.dual_head->net().params();
  auto method = build_method(MethodSpec::standard(MethodName::EsDfm), MlpModel(tiny_arch(3), 1), est,
                             TrainConfig{}, ElapsedPolicy::dirac(60));
  std::vector<TwoHeadSample> matured{{make_features({0}), {1, 0}, {1, 1}}};
  Rng rng(1);
  const auto samples = method.training_stream(stream(200, 1), rng);
  const Eigen::VectorXd w0 = method.weights(samples);
  method.continue_estimator(matured);
  CHECK(est.dual_head->net().params() == before);
  CHECK(method.weights(samples) != w0);
}
