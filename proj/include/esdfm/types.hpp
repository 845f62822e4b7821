#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace esdfm {

using Seconds = double;
using Rng = std::mt19937_64;

struct Features {
  std::vector<std::int32_t> categorical;
  std::vector<double> continuous;

  bool operator==(const Features&) const = default;
};

/// Features are immutable once logged; events and the samples derived from
/// them share one copy.
using FeatureRef = std::shared_ptr<const Features>;

inline FeatureRef make_features(std::vector<std::int32_t> categorical,
                                std::vector<double> continuous = {}) {
  return std::make_shared<const Features>(
      Features{std::move(categorical), std::move(continuous)});
}

/// One logged click. `conversion_ts` is absent when the click never converts.
struct ClickEvent {
  std::int64_t id = 0;
  Seconds click_ts = 0.0;
  std::optional<Seconds> conversion_ts;
  FeatureRef features;

  bool converted() const { return conversion_ts.has_value(); }
  /// Click-to-conversion delay; only meaningful when converted().
  Seconds delay() const { return *conversion_ts - click_ts; }
};

bool operator==(const ClickEvent& a, const ClickEvent& b);

enum class SampleKind : std::uint8_t {
  ObservedPositive,
  FakeNegative,
  RealNegative,
  DelayedPositiveDuplicate,
};

std::string_view to_string(SampleKind kind);
SampleKind sample_kind_from_string(std::string_view text);

/// A relabeled instance as a training stream delivers it.
struct TrainingSample {
  std::int64_t source_id = 0;
  Seconds click_ts = 0.0;
  Seconds emit_ts = 0.0;
  FeatureRef features;
  int observed_label = 0;
  SampleKind kind = SampleKind::RealNegative;
  Seconds elapsed = 0.0;
  /// Click-to-conversion delay when the conversion is known at emit time.
  std::optional<Seconds> delay;
};

bool operator==(const TrainingSample& a, const TrainingSample& b);

inline Seconds time_key(const ClickEvent& e) { return e.click_ts; }
inline Seconds time_key(const TrainingSample& s) { return s.emit_ts; }

}  // namespace esdfm
