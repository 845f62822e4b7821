#include "doctest.h"
#include "esdfm/metrics.hpp"
#include "esdfm/errors.hpp"

#include <random>
#include <vector>

using namespace esdfm;

TEST_CASE("auc examples") {
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{0, 1, 0}) == 0.5);
  CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedMetricError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), InputError);
}

TEST_CASE("auc is invariant under increasing transforms") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(300), t(300);
  std::vector<int> y(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::round(u(rng) * 20) / 20;
    t[i] = std::exp(3 * s[i]) - 7;
    y[i] = u(rng) < s[i] ? 1 : 0;
  }
  CHECK(auc(s, y) == auc(t, y));
}

TEST_CASE("pr_auc examples") {
  CHECK(pr_auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 1, 0}) == 1.0);
  CHECK(pr_auc(std::vector<double>{0.8, 0.6, 0.4}, std::vector<int>{1, 0, 1}) == doctest::Approx(5.0 / 6.0));
  CHECK(pr_auc(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{0, 0, 0, 1}) == doctest::Approx(0.25));
  CHECK_THROWS_AS(pr_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), UndefinedMetricError);
}

TEST_CASE("pr_auc ties follow input order") {
  CHECK(pr_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}) == 1.0);
  CHECK(pr_auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
}

TEST_CASE("nll examples") {
  CHECK(nll(std::vector<double>{1 - 1e-7, 1e-7}, std::vector<int>{1, 0}) < 1e-6);
  CHECK(nll(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}) == doctest::Approx(std::log(2.0)));
  const double p = 0.2269;
  const double h = -(p * std::log(p) + (1 - p) * std::log(1 - p));
  CHECK(h == doctest::Approx(0.535503).epsilon(1e-5));
  std::vector<double> probs(10000, p);
  std::vector<int> labels(10000, 0);
  for (int i = 0; i < 2269; ++i) labels[static_cast<std::size_t>(i)] = 1;
  CHECK(nll(probs, labels) == doctest::Approx(h).epsilon(1e-12));
  CHECK_THROWS_AS(nll(std::vector<double>{}, std::vector<int>{}), UndefinedMetricError);
}

TEST_CASE("relative metric anchors") {
  CHECK(relative_metric(0.8376, 0.8376, 0.8450, Orientation::HigherIsBetter) == 0.0);
  CHECK(relative_metric(0.8450, 0.8376, 0.8450, Orientation::HigherIsBetter) == 1.0);
  CHECK(relative_metric(0.4047, 0.4047, 0.3868, Orientation::LowerIsBetter) == 0.0);
  CHECK(relative_metric(0.3868, 0.4047, 0.3868, Orientation::LowerIsBetter) == 1.0);
  CHECK(std::signbit(relative_metric(0.4047, 0.4047, 0.3868, Orientation::LowerIsBetter)) == false);
  CHECK(relative_metric(0.8402, 0.8376, 0.8450, Orientation::HigherIsBetter) == doctest::Approx(0.351).epsilon(1e-3));
  CHECK(relative_metric(0.3924, 0.4047, 0.3868, Orientation::LowerIsBetter) == doctest::Approx(0.687).epsilon(1e-3));
  CHECK(relative_metric(1.2599, 0.4047, 0.3868, Orientation::LowerIsBetter) == doctest::Approx(-47.78).epsilon(1e-3));
  CHECK_THROWS_AS(relative_metric(0.5, 0.4, 0.4, Orientation::HigherIsBetter), UndefinedMetricError);
}
