#pragma once

#include <functional>
#include <variant>
#include <vector>

#include "esdfm/datagen.hpp"
#include "esdfm/types.hpp"

namespace esdfm {

/// Distribution p(e|x) of the wait before a click is labeled.
struct ElapsedPolicy {
  struct Dirac {
    Seconds c = 0.0;
  };
  struct PerX {
    std::function<Seconds(const Features&, Rng&)> sample;
  };
  std::variant<Dirac, PerX> kind = Dirac{};

  static ElapsedPolicy dirac(Seconds c);
  static ElapsedPolicy per_x(std::function<Seconds(const Features&, Rng&)> sample);

  bool is_dirac() const { return std::holds_alternative<Dirac>(kind); }
  /// Throws UnsupportedError for non-Dirac policies.
  Seconds dirac_constant() const;
  void validate() const;
};

Seconds draw_elapsed(const ClickEvent& event, const ElapsedPolicy& policy, Rng& rng);

/// Elapsed-time sampling: one sample per click at click+e plus a delayed
/// positive duplicate at conversion time for every fake negative.
std::vector<TrainingSample> transform_es(const std::vector<ClickEvent>& stream,
                                         const ElapsedPolicy& policy, Rng& rng);

/// Immediate negatives, positives duplicated at conversion time (e = 0).
std::vector<TrainingSample> transform_fnw(const std::vector<ClickEvent>& stream, Rng& rng);

/// One sample per click labeled by conversion within e; no later correction.
std::vector<TrainingSample> transform_fsiw(const std::vector<ClickEvent>& stream,
                                           const ElapsedPolicy& policy, Rng& rng);

/// True labels known at click time.
std::vector<TrainingSample> transform_oracle(const std::vector<ClickEvent>& stream);

struct DisturbConfig {
  double strength = 0.0;
  std::uint64_t seed = 0;
  void validate() const;
};

/// Swaps (conversion, click time, conversion time) between floor(d * n_pos)
/// random positives and as many distinct random negatives.
std::vector<ClickEvent> disturb(const std::vector<ClickEvent>& stream, const DisturbConfig& config);

}  // namespace esdfm
