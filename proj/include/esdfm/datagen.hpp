#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string_view>
#include <variant>
#include <vector>

#include "esdfm/errors.hpp"
#include "esdfm/types.hpp"

namespace esdfm {

/// k distinct feature vectors: one categorical field whose id is the cell.
struct DiscreteSpace {
  std::size_t cells = 4;
};

/// `dims` standard-normal continuous features.
struct ContinuousSpace {
  std::size_t dims = 4;
};

using FeatureSpace = std::variant<DiscreteSpace, ContinuousSpace>;

/// Time-varying additive shift of the conversion logit.
struct Drift {
  enum class Kind { None, Sine, Trend };
  Kind kind = Kind::None;
  double amplitude = 0.0;  // logit units
  Seconds period = 86400.0;  // Sine only
  Seconds horizon = 1.0;  // Trend ramps from -amplitude to +amplitude over it

  double logit_shift(Seconds t) const;
  bool stationary() const { return kind == Kind::None || amplitude == 0.0; }
};

struct GenConfig {
  std::size_t n_events = 100000;
  Seconds horizon = 48 * 3600.0;
  FeatureSpace feature_space = DiscreteSpace{};
  double target_avg_cvr = 0.2269;
  Seconds delay_scale = 3600.0;
  std::uint64_t seed = 0;
  Drift drift;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Ground truth of a synthetic stream: p(y=1|x,t) and the exponential delay
/// rate lambda(x) of converters.
struct SyntheticTruth {
  std::function<double(const Features&, Seconds)> cvr_fn;
  std::function<double(const Features&)> delay_rate_fn;
  /// Per-cell tables; filled only for discrete feature spaces.
  std::vector<double> cell_cvr;
  std::vector<double> cell_rate;
  Drift drift;

  double cvr(const Features& x, Seconds t = 0.0) const { return cvr_fn(x, t); }
  double delay_rate(const Features& x) const { return delay_rate_fn(x); }
  bool discrete() const { return !cell_cvr.empty(); }

  /// Survival of the delay of a converter, p(h > e | x, y=1).
  double delay_survival(const Features& x, Seconds e) const;

  /// Explicit per-cell truth over a discrete space.
  static SyntheticTruth discrete(std::vector<double> cvrs, std::vector<double> rates,
                                 Drift drift = {});

  /// Logistic in a random linear score, rescaled so the population mean CVR
  /// equals target_avg_cvr. Rates vary around 1/delay_scale.
  static SyntheticTruth random(const GenConfig& config);
};

std::vector<ClickEvent> synth_stream(const GenConfig& config, const SyntheticTruth& truth);

/// Cell id of an event drawn from a discrete space.
inline std::size_t cell_of(const Features& x) { return static_cast<std::size_t>(x.categorical.at(0)); }

/// Criteo conversion-log ingestion.
struct CriteoFormat {
  static constexpr std::size_t kContinuous = 8;
  static constexpr std::size_t kCategorical = 9;
  static constexpr std::size_t kColumns = 2 + kContinuous + kCategorical;
  static constexpr std::int32_t kHashSpace = 1 << 18;
  static constexpr std::int32_t kMissing = 0;
};

ClickEvent parse_criteo_line(std::string_view line, std::size_t line_no = 1);

/// Reads a whole log, sorts by click time and shifts the epoch so the first
/// click is at t=0. Ids are the 0-based line numbers.
std::vector<ClickEvent> read_criteo(std::istream& in);

template <typename Item>
using Bucket = std::vector<Item>;

/// Groups a sorted stream into consecutive [origin + i*width, origin + (i+1)*width)
/// windows. With `n_buckets` set, items past the last window are dropped and
/// trailing empty buckets are kept.
template <typename Item>
std::vector<Bucket<Item>> bucketize(const std::vector<Item>& items, Seconds width,
                                    Seconds origin = 0.0,
                                    std::optional<std::size_t> n_buckets = std::nullopt) {
  if (!(width > 0.0)) throw ConfigError("width", "bucket width must be positive");
  std::vector<Bucket<Item>> buckets;
  if (n_buckets) buckets.resize(*n_buckets);
  Seconds previous = origin;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Seconds t = time_key(items[i]);
    if (t < previous) {
      throw OrderingError("stream not sorted at position " + std::to_string(i));
    }
    previous = t;
    const double slot = std::floor((t - origin) / width);
    if (n_buckets && !(slot < static_cast<double>(*n_buckets))) break;
    if (!std::isfinite(slot)) throw OrderingError("non-finite time key in stream");
    const auto index = static_cast<std::size_t>(slot);
    if (!n_buckets && index >= buckets.size()) {
      buckets.resize(index + 1);
    }
    buckets[index].push_back(items[i]);
  }
  return buckets;
}

struct StreamSplit {
  std::vector<ClickEvent> pretrain;
  std::vector<ClickEvent> streaming;
  Seconds split_ts = 0.0;  // click time of the first streaming event
};

/// Splits at the median click: the first floor(n/2) events pre-train.
StreamSplit split_pretrain_stream(const std::vector<ClickEvent>& stream);

void require_sorted_by_click(const std::vector<ClickEvent>& stream);

}  // namespace esdfm
