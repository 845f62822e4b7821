#include "esdfm/types.hpp"

#include <string>

#include "esdfm/errors.hpp"

namespace esdfm {

namespace {

bool same_features(const FeatureRef& a, const FeatureRef& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

}  // namespace

bool operator==(const ClickEvent& a, const ClickEvent& b) {
  return a.id == b.id && a.click_ts == b.click_ts && a.conversion_ts == b.conversion_ts &&
         same_features(a.features, b.features);
}

bool operator==(const TrainingSample& a, const TrainingSample& b) {
  return a.source_id == b.source_id && a.click_ts == b.click_ts && a.emit_ts == b.emit_ts &&
         a.observed_label == b.observed_label && a.kind == b.kind && a.elapsed == b.elapsed &&
         a.delay == b.delay && same_features(a.features, b.features);
}

std::string_view to_string(SampleKind kind) {
  switch (kind) {
    case SampleKind::ObservedPositive: return "observed_positive";
    case SampleKind::FakeNegative: return "fake_negative";
    case SampleKind::RealNegative: return "real_negative";
    case SampleKind::DelayedPositiveDuplicate: return "delayed_positive";
  }
  return "unknown";
}

SampleKind sample_kind_from_string(std::string_view text) {
  for (auto kind : {SampleKind::ObservedPositive, SampleKind::FakeNegative,
                    SampleKind::RealNegative, SampleKind::DelayedPositiveDuplicate}) {
    if (to_string(kind) == text) return kind;
  }
  throw InputError("unknown sample kind '" + std::string(text) + "'");
}

}  // namespace esdfm
