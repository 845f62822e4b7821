#include <sstream>

#include "doctest.h"
#include "esdfm/datagen.hpp"
#include "support.hpp"

using namespace esdfm;
using esdfm::test::event;
using esdfm::test::within_se;

namespace {

std::string criteo_line(std::string click, std::string conv) {
  std::string line = click + "\t" + conv;
  for (int j = 0; j < 8; ++j) line += "\t" + std::to_string(j);
  for (int j = 0; j < 9; ++j) line += "\ttok" + std::to_string(j);
  return line;
}

}  // namespace

TEST_CASE("synth_stream is sorted, uniform over the horizon and deterministic") {
  GenConfig cfg;
  cfg.n_events = 20000;
  cfg.seed = 7;
  const auto truth = SyntheticTruth::random(cfg);
  const auto a = synth_stream(cfg, truth);
  const auto b = synth_stream(cfg, truth);
  REQUIRE(a.size() == cfg.n_events);
  CHECK(a == b);
  double mean_click = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == static_cast<std::int64_t>(i));
    if (i) CHECK(a[i - 1].click_ts <= a[i].click_ts);
    CHECK(a[i].click_ts >= 0.0);
    CHECK(a[i].click_ts <= cfg.horizon);
    if (a[i].converted()) CHECK(*a[i].conversion_ts >= a[i].click_ts);
    mean_click += a[i].click_ts / cfg.horizon;
  }
  mean_click /= static_cast<double>(a.size());
  CHECK(std::abs(mean_click - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / 20000.0));
}

TEST_CASE("random truth hits the target average cvr") {
  for (auto space : {FeatureSpace{DiscreteSpace{16}}, FeatureSpace{ContinuousSpace{6}}}) {
    GenConfig cfg;
    cfg.n_events = 200000;
    cfg.feature_space = space;
    cfg.seed = 3;
    const auto truth = SyntheticTruth::random(cfg);
    const auto events = synth_stream(cfg, truth);
    double conv = 0.0;
    for (const auto& e : events) conv += e.converted() ? 1.0 : 0.0;
    const double rate = conv / static_cast<double>(events.size());
    // Sampling noise of the features adds to the binomial error for finite cell counts.
    CHECK(within_se(rate, 0.2269, static_cast<double>(events.size()), 4.0));
  }
}

TEST_CASE("zero cvr truth never converts") {
  GenConfig cfg;
  cfg.n_events = 5000;
  cfg.feature_space = DiscreteSpace{2};
  const auto truth = SyntheticTruth::discrete({0.0, 0.0}, {1.0, 1.0});
  for (const auto& e : synth_stream(cfg, truth)) CHECK_FALSE(e.converted());
}

TEST_CASE("per-cell cvr and mean delay match the truth") {
  GenConfig cfg;
  cfg.n_events = 100000;
  cfg.feature_space = DiscreteSpace{4};
  cfg.seed = 11;
  const std::vector<double> cvr{0.1, 0.2, 0.3, 0.4};
  const std::vector<double> rate{1.0 / 600, 1.0 / 1800, 1.0 / 3600, 1.0 / 7200};
  const auto truth = SyntheticTruth::discrete(cvr, rate);
  std::vector<double> n(4), pos(4), delay_sum(4), delay_sq(4);
  for (const auto& e : synth_stream(cfg, truth)) {
    const auto k = cell_of(*e.features);
    n[k] += 1;
    if (e.converted()) {
      pos[k] += 1;
      delay_sum[k] += e.delay();
      delay_sq[k] += e.delay() * e.delay();
    }
  }
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(within_se(pos[k] / n[k], cvr[k], n[k]));
    const double mean = delay_sum[k] / pos[k];
    // Exponential: sd equals the mean.
    CHECK(std::abs(mean - 1.0 / rate[k]) <= 3.0 * (1.0 / rate[k]) / std::sqrt(pos[k]));
  }
}

TEST_CASE("invalid generator config names the field") {
  GenConfig cfg;
  cfg.target_avg_cvr = 1.5;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "target_avg_cvr");
  }
  cfg = GenConfig{};
  cfg.n_events = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GenConfig{};
  cfg.horizon = 0.0;
  CHECK_THROWS_AS(synth_stream(cfg, SyntheticTruth::random(GenConfig{})), ConfigError);
}

TEST_CASE("sine drift moves the cvr over time") {
  Drift d{Drift::Kind::Sine, 1.0, 86400.0, 1.0};
  const auto truth = SyntheticTruth::discrete({0.3}, {1.0}, d);
  const Features x{{0}, {}};
  CHECK(truth.cvr(x, 0.0) == doctest::Approx(0.3));
  CHECK(truth.cvr(x, 86400.0 / 4) > 0.3);
  CHECK(truth.cvr(x, 3 * 86400.0 / 4) < 0.3);
}

TEST_CASE("delay survival is the exponential tail") {
  const auto truth = SyntheticTruth::discrete({0.3}, {0.01});
  const Features x{{0}, {}};
  CHECK(truth.delay_survival(x, 0.0) == 1.0);
  CHECK(truth.delay_survival(x, 100.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(truth.delay_survival(x, std::numeric_limits<double>::infinity()) == 0.0);
}

TEST_CASE("parse_criteo_line reads timestamps and features") {
  const auto a = parse_criteo_line(criteo_line("100", ""));
  CHECK(a.click_ts == 100.0);
  CHECK_FALSE(a.converted());
  REQUIRE(a.features->continuous.size() == 8);
  REQUIRE(a.features->categorical.size() == 9);
  CHECK(a.features->continuous[0] == 0.0);
  CHECK(a.features->continuous[3] == doctest::Approx(std::log(4.0)));
  for (auto id : a.features->categorical) {
    CHECK(id > 0);
    CHECK(id < CriteoFormat::kHashSpace);
  }
  const auto b = parse_criteo_line(criteo_line("100", "4000"));
  CHECK(b.delay() == 3900.0);
  CHECK(b.features->categorical == a.features->categorical);
}

TEST_CASE("parse_criteo_line maps missing fields to the sentinel") {
  std::string line = "5\t";
  for (int j = 0; j < 17; ++j) line += "\t";
  const auto ev = parse_criteo_line(line);
  for (auto v : ev.features->continuous) CHECK(v == 0.0);
  for (auto id : ev.features->categorical) CHECK(id == CriteoFormat::kMissing);
}

TEST_CASE("parse_criteo_line errors carry the line number") {
  try {
    parse_criteo_line(criteo_line("abc", ""), 42);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 42);
  }
  CHECK_THROWS_AS(parse_criteo_line("1\t2\t3", 1), ParseError);
  CHECK_THROWS_AS(parse_criteo_line(criteo_line("100", "50"), 1), ParseError);
}

TEST_CASE("read_criteo sorts and normalizes the epoch") {
  std::stringstream in;
  in << criteo_line("2000", "2500") << "\n" << criteo_line("1000", "") << "\n";
  const auto events = read_criteo(in);
  REQUIRE(events.size() == 2);
  CHECK(events[0].click_ts == 0.0);
  CHECK(events[1].click_ts == 1000.0);
  CHECK(*events[1].conversion_ts == 1500.0);
  CHECK(events[0].id == 1);
}

TEST_CASE("bucketize groups by window") {
  const std::vector<ClickEvent> s{event(0, 10), event(1, 3600), event(2, 7300)};
  const auto b = bucketize(s, 3600.0);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 1);
  CHECK(b[1][0].id == 1);
  CHECK(b[2][0].id == 2);
  CHECK(bucketize(std::vector<ClickEvent>{}, 3600.0).empty());
  CHECK_THROWS_AS(bucketize(std::vector<ClickEvent>{event(0, 5), event(1, 1)}, 10.0), OrderingError);
  CHECK_THROWS_AS(bucketize(s, 0.0), ConfigError);
}

TEST_CASE("bucketize with a fixed count keeps empty buckets and drops overflow") {
  const std::vector<ClickEvent> s{event(0, 10), event(1, 7300), event(2, 99999)};
  const auto b = bucketize(s, 3600.0, 0.0, std::size_t{4});
  REQUIRE(b.size() == 4);
  CHECK(b[1].empty());
  CHECK(b[2].size() == 1);
  CHECK(b[3].empty());
}

TEST_CASE("bucketize of a 48h stream concatenates back to the input") {
  GenConfig cfg;
  cfg.n_events = 10000;
  cfg.seed = 5;
  const auto s = synth_stream(cfg, SyntheticTruth::random(cfg));
  const auto b = bucketize(s, 3600.0);
  CHECK(b.size() == 48);
  std::vector<ClickEvent> joined;
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (const auto& e : b[i]) {
      CHECK(e.click_ts >= i * 3600.0);
      CHECK(e.click_ts < (i + 1) * 3600.0);
      joined.push_back(e);
    }
  }
  CHECK(joined == s);
}

TEST_CASE("split_pretrain_stream halves the stream") {
  const std::vector<ClickEvent> two{event(0, 1), event(1, 2)};
  const auto split = split_pretrain_stream(two);
  CHECK(split.pretrain.size() == 1);
  CHECK(split.streaming.size() == 1);
  CHECK(split.split_ts == 2.0);

  GenConfig cfg;
  cfg.n_events = 50000;
  const auto s = synth_stream(cfg, SyntheticTruth::random(cfg));
  const auto half = split_pretrain_stream(s);
  CHECK(std::abs(half.split_ts - 24 * 3600.0) < 0.02 * 24 * 3600.0);
  CHECK_THROWS_AS(split_pretrain_stream({event(0, 2), event(1, 1)}), OrderingError);
}
