#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "esdfm/types.hpp"

namespace esdfm::test {

inline ClickEvent event(std::int64_t id, Seconds click, std::optional<Seconds> conv = std::nullopt,
                        std::int32_t cell = 0) {
  return ClickEvent{id, click, conv, make_features({cell})};
}

/// |observed - expected| within k binomial standard errors of n draws.
inline bool within_se(double observed, double expected, double n, double k = 3.0) {
  const double se = std::sqrt(std::max(expected * (1.0 - expected), 1e-12) / n);
  return std::abs(observed - expected) <= k * se;
}

}  // namespace esdfm::test
