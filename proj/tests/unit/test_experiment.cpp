#include "doctest.h"
#include "esdfm/experiment.hpp"

using namespace esdfm;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.data.synthetic.n_events = 8000;
  c.data.synthetic.horizon = 12 * 3600.0;
  c.data.synthetic.feature_space = DiscreteSpace{6};
  c.model.hidden = {8};
  c.train.batch_size = 128;
  c.train.learning_rate = 3e-3;
  c.pretrain_epochs = 2;
  c.estimator_epochs = 2;
  return c;
}

}  // namespace

TEST_CASE("config JSON round-trip") {
  auto c = small_config();
  c.methods = {MethodName::Vanilla, MethodName::Fnc};
  c.attribution_window = 7200.0;
  c.data.synthetic.drift = Drift{Drift::Kind::Sine, 0.5, 3600.0, c.data.synthetic.horizon};
  const auto j = config_to_json(c);
  const auto back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(back.methods == c.methods);
  CHECK(back.window() == 7200.0);
}

TEST_CASE("config defaults") {
  const auto c = config_from_json(nlohmann::json::object());
  CHECK(c.elapsed_c == 900.0);
  CHECK(c.bucket_width == 3600.0);
  CHECK(c.disturbance == 0.0);
  CHECK(c.train.learning_rate == 1e-3);
  CHECK(c.train.l2_strength == 1e-6);
  CHECK(c.model.hidden == std::vector<std::size_t>{256, 256, 128});
  CHECK(c.data.synthetic.target_avg_cvr == 0.2269);
  CHECK(c.window() == c.data.synthetic.horizon);
  ExperimentConfig criteo;
  criteo.data.kind = DataSource::Kind::Criteo;
  CHECK(criteo.window() == 30 * 86400.0);
}

TEST_CASE("config errors name the field") {
  auto expect_field = [](const nlohmann::json& j, const std::string& field) {
    try {
      config_from_json(j);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == field);
    }
  };
  expect_field({{"methods", nlohmann::json::array()}}, "methods");
  expect_field({{"elapsed_c", -1}}, "elapsed_c");
  expect_field({{"disturbance", 1.5}}, "disturbance");
  expect_field({{"bogus", 1}}, "bogus");
  expect_field({{"train", {{"lr", 1}}}}, "train.lr");
  expect_field({{"schema_version", 9}}, "schema_version");
  expect_field({{"methods", {"vanilla", "nope"}}}, "methods");
  expect_field({{"data", {{"source", "criteo"}}}}, "data.path");
}

TEST_CASE("missing Criteo file is an input error") {
  ExperimentConfig c;
  c.data.kind = DataSource::Kind::Criteo;
  c.data.criteo_path = "/nonexistent/criteo.tsv";
  CHECK_THROWS_AS(load_dataset(c, 1), InputError);
}

TEST_CASE("a run is reproducible from config and seed") {
  auto c = small_config();
  c.methods = {MethodName::Vanilla, MethodName::Oracle, MethodName::EsDfm, MethodName::Fnw};
  const auto data = load_dataset(c, 3);
  const auto a = run_seed(c, data, 3);
  const auto b = run_seed(c, load_dataset(c, 3), 3);
  REQUIRE(a.reports.size() == 4);
  for (std::size_t k = 0; k < a.reports.size(); ++k) {
    CHECK(a.reports[k].pooled.nll == b.reports[k].pooled.nll);
    CHECK(a.reports[k].pooled.auc == b.reports[k].pooled.auc);
  }
  CHECK(a.report(MethodName::Vanilla).relative->r_nll == 0.0);
  CHECK(a.report(MethodName::Oracle).relative->r_auc == 1.0);
}

TEST_CASE("robustness at d = 0 reproduces the plain run") {
  auto c = small_config();
  c.methods = {MethodName::Fnw, MethodName::EsDfm};
  c.seeds = {5};
  const std::vector<double> d{0.0, 0.2};
  const auto rows = robustness(c, d);
  CHECK(rows.size() == 4);
  const auto run = run_seed(c, load_dataset(c, 5), 5);
  CHECK(rows[0].metrics.nll == run.reports[0].pooled.nll);
  CHECK(rows[1].metrics.nll == run.reports[1].pooled.nll);
  CHECK(rows[2].metrics.nll != rows[0].metrics.nll);
}

TEST_CASE("sweep reports the observable fraction") {
  auto c = small_config();
  c.data.synthetic.n_events = 40000;
  c.data.cell_cvr.assign(6, 0.3);
  c.data.cell_rate.assign(6, 1.0 / 1800.0);
  c.seeds = {1, 2};
  c.threads = 2;
  const std::vector<double> cs{0.0, 1800.0};
  const auto rows = sweep_elapsed(c, cs);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    if (r.c == 0.0) CHECK(r.observable_fraction == 0.0);
    if (r.c == 1800.0) CHECK(std::abs(r.observable_fraction - (1.0 - std::exp(-1.0))) < 0.02);
  }
  CHECK_THROWS_AS(sweep_elapsed(c, std::vector<double>{900.0}), ConfigError);
}

TEST_CASE("observable fraction") {
  std::vector<ClickEvent> s{{0, 0, 100.0, make_features({0})}, {1, 0, 1000.0, make_features({0})},
                            {2, 0, std::nullopt, make_features({0})}};
  CHECK(observable_fraction(s, 500) == 0.5);
  CHECK(observable_fraction(s, 1000) == 1.0);
}

TEST_CASE("oracle beats vanilla on pooled AUC across seeds") {
  auto c = small_config();
  c.data.synthetic.n_events = 20000;
  c.data.synthetic.feature_space = ContinuousSpace{4};
  c.data.synthetic.delay_scale = 4 * 3600.0;
  c.methods = {MethodName::Vanilla, MethodName::Oracle};
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto run = run_seed(c, load_dataset(c, seed), seed);
    if (run.report(MethodName::Oracle).pooled.auc > run.report(MethodName::Vanilla).pooled.auc) ++wins;
  }
  // One-sided sign test: 5 of 5 gives p = 1/32.
  CHECK(wins == 5);
}

TEST_CASE("run_jobs keeps order and rethrows") {
  std::vector<std::function<int()>> jobs;
  for (int i = 0; i < 10; ++i) jobs.push_back([i] { return i * i; });
  const auto out = run_jobs(jobs, 3);
  for (int i = 0; i < 10; ++i) CHECK(out[static_cast<std::size_t>(i)] == i * i);
  jobs.push_back([]() -> int { throw InputError("boom"); });
  CHECK_THROWS_AS(run_jobs(jobs, 2), InputError);
}
