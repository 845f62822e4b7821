#pragma once

#include <span>

namespace esdfm {

/// Mann-Whitney AUC, ties count one half. Throws UndefinedMetricError unless
/// both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Average precision over positives in descending score order; ties keep
/// input order. Throws UndefinedMetricError without positives.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

/// Mean binary cross-entropy of probabilities already clamped into (0, 1).
double nll(std::span<const double> probs, std::span<const int> labels);

enum class Orientation { HigherIsBetter, LowerIsBetter };

/// Position of a method inside the vanilla (0) to oracle (1) gap.
double relative_metric(double method_value, double vanilla_value, double oracle_value,
                       Orientation orientation);

}  // namespace esdfm
