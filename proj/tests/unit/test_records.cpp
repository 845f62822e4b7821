#include <sstream>

#include "doctest.h"
#include "esdfm/records.hpp"
#include "esdfm/relabel.hpp"

using namespace esdfm;

TEST_CASE("doubles round-trip through text") {
  for (double v : {0.0, -0.0, 1.0 / 3.0, 1e-300, 123456789.123456789, -2.5e17}) {
    CHECK(parse_double(format_double(v), 1) == v);
  }
  CHECK_THROWS_AS(parse_double("1.0x", 3), ParseError);
}

TEST_CASE("event streams round-trip bit-exactly") {
  for (auto space : {FeatureSpace{DiscreteSpace{5}}, FeatureSpace{ContinuousSpace{3}}}) {
    GenConfig cfg;
    cfg.n_events = 500;
    cfg.feature_space = space;
    const auto events = synth_stream(cfg, SyntheticTruth::random(cfg));
    std::stringstream buf;
    write_events(buf, events);
    CHECK(read_events(buf) == events);
  }
}

TEST_CASE("training samples round-trip") {
  GenConfig cfg;
  cfg.n_events = 500;
  const auto events = synth_stream(cfg, SyntheticTruth::random(cfg));
  Rng rng(1);
  const auto samples = transform_es(events, ElapsedPolicy::dirac(900), rng);
  std::stringstream buf;
  write_samples(buf, samples);
  CHECK(read_samples(buf) == samples);
}

TEST_CASE("dp/rn records round-trip") {
  const DpRnSample s{make_features({3, 4}, {0.5}), 1, 0, 1};
  const auto back = parse_dp_rn_record(dp_rn_record(s));
  CHECK(back.dp_label == 1);
  CHECK(back.rn_label == 0);
  CHECK(back.rn_mask == 1);
  CHECK(*back.features == *s.features);
}

TEST_CASE("malformed records report their line") {
  try {
    parse_event_record("1\t2\t3", 17);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 17);
  }
  CHECK_THROWS_AS(parse_event_record("1\t5\t2\t0\t", 1), ParseError);
  CHECK_THROWS_AS(parse_sample_record("1\t0\t0\t2\treal_negative\t0\t\t0\t", 1), ParseError);
  CHECK_THROWS_AS(parse_sample_record("1\t0\t0\t0\tbogus\t0\t\t0\t", 1), ParseError);
}

TEST_CASE("reports round-trip through line records") {
  StreamReport r;
  r.method = "es_dfm";
  r.buckets = {{0, 10, 12, 0.7, 0.4, 0.5}, {1, 3, 4, std::nan(""), std::nan(""), 0.2}};
  r.pooled = {13, 0.71, 0.41, 0.45};
  r.relative = RelativeMetrics{0.3, 0.5, 0.6};
  std::stringstream buf;
  write_report_jsonl(buf, r);
  const auto back = read_report_jsonl(buf);
  CHECK(back.method == r.method);
  REQUIRE(back.buckets.size() == 2);
  CHECK(back.buckets[0].auc == 0.7);
  CHECK(std::isnan(back.buckets[1].auc));
  CHECK(back.buckets[1].n_train == 4);
  CHECK(back.pooled.nll == 0.45);
  REQUIRE(back.relative);
  CHECK(back.relative->r_nll == 0.6);

  std::stringstream csv;
  write_report_csv(csv, r);
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 4);
  CHECK(csv.str().find("es_dfm,pooled,13,") != std::string::npos);
}
