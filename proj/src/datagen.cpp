#include "esdfm/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <string>

namespace esdfm {

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double logit(double p) { return std::log(p) - std::log1p(-p); }

/// Bias b such that mean(logistic(score + b)) hits the target.
template <typename MeanFn>
double solve_bias(double target, MeanFn mean_at) {
  double lo = -40.0;
  double hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_at(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// E[logistic(b + sd * Z)] for standard normal Z by a fine trapezoid rule.
double gaussian_logistic_mean(double b, double sd) {
  constexpr int kSteps = 4000;
  constexpr double kRange = 10.0;
  const double dz = 2.0 * kRange / kSteps;
  double total = 0.0;
  for (int i = 0; i <= kSteps; ++i) {
    const double z = -kRange + i * dz;
    const double w = (i == 0 || i == kSteps) ? 0.5 : 1.0;
    total += w * std::exp(-0.5 * z * z) * logistic(b + sd * z);
  }
  return total * dz / std::sqrt(2.0 * std::numbers::pi);
}

bool parse_number(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::uint64_t fnv1a(std::string_view token) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

double Drift::logit_shift(Seconds t) const {
  switch (kind) {
    case Kind::None: return 0.0;
    case Kind::Sine: return amplitude * std::sin(2.0 * std::numbers::pi * t / period);
    case Kind::Trend: return amplitude * (2.0 * t / horizon - 1.0);
  }
  return 0.0;
}

void GenConfig::validate() const {
  if (n_events == 0) throw ConfigError("n_events", "must be positive");
  if (!(horizon > 0.0)) throw ConfigError("horizon", "must be positive");
  if (!(target_avg_cvr > 0.0 && target_avg_cvr < 1.0)) {
    throw ConfigError("target_avg_cvr", "must lie in (0, 1)");
  }
  if (!(delay_scale > 0.0)) throw ConfigError("delay_scale", "must be positive");
  std::visit(
      [](const auto& space) {
        using T = std::decay_t<decltype(space)>;
        if constexpr (std::is_same_v<T, DiscreteSpace>) {
          if (space.cells == 0) throw ConfigError("feature_space", "discrete space needs cells");
        } else {
          if (space.dims == 0) throw ConfigError("feature_space", "continuous space needs dims");
        }
      },
      feature_space);
  if (drift.kind == Drift::Kind::Sine && !(drift.period > 0.0)) {
    throw ConfigError("drift.period", "must be positive");
  }
  if (drift.kind == Drift::Kind::Trend && !(drift.horizon > 0.0)) {
    throw ConfigError("drift.horizon", "must be positive");
  }
}

double SyntheticTruth::delay_survival(const Features& x, Seconds e) const {
  if (std::isinf(e)) return 0.0;
  return std::exp(-delay_rate(x) * e);
}

SyntheticTruth SyntheticTruth::discrete(std::vector<double> cvrs, std::vector<double> rates,
                                        Drift drift) {
  if (cvrs.empty() || cvrs.size() != rates.size()) {
    throw ConfigError("cell_cvr", "need one cvr and one rate per cell");
  }
  for (double p : cvrs) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("cell_cvr", "cvr outside [0, 1]");
  }
  for (double r : rates) {
    if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("cell_rate", "rate must be positive");
  }
  SyntheticTruth truth;
  truth.cell_cvr = std::move(cvrs);
  truth.cell_rate = std::move(rates);
  truth.drift = drift;
  truth.cvr_fn = [cvr = truth.cell_cvr, drift](const Features& x, Seconds t) {
    const double base = cvr.at(cell_of(x));
    if (drift.stationary() || base <= 0.0 || base >= 1.0) return base;
    return logistic(logit(base) + drift.logit_shift(t));
  };
  truth.delay_rate_fn = [rate = truth.cell_rate](const Features& x) { return rate.at(cell_of(x)); };
  return truth;
}

SyntheticTruth SyntheticTruth::random(const GenConfig& config) {
  config.validate();
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  const double base_rate = 1.0 / config.delay_scale;

  if (const auto* space = std::get_if<DiscreteSpace>(&config.feature_space)) {
    std::vector<double> scores(space->cells);
    for (auto& s : scores) s = normal(rng);
    const double b = solve_bias(config.target_avg_cvr, [&](double bias) {
      double total = 0.0;
      for (double s : scores) total += logistic(s + bias);
      return total / static_cast<double>(scores.size());
    });
    std::vector<double> cvrs;
    std::vector<double> rates;
    for (double s : scores) {
      cvrs.push_back(logistic(s + b));
      rates.push_back(base_rate * std::exp(jitter(rng)));
    }
    return discrete(std::move(cvrs), std::move(rates), config.drift);
  }

  const auto dims = std::get<ContinuousSpace>(config.feature_space).dims;
  std::vector<double> w(dims);
  std::vector<double> v(dims);
  double w_norm = 0.0;
  double v_norm = 0.0;
  for (std::size_t j = 0; j < dims; ++j) {
    w[j] = normal(rng) / std::sqrt(static_cast<double>(dims));
    v[j] = normal(rng);
    w_norm += w[j] * w[j];
    v_norm += v[j] * v[j];
  }
  w_norm = std::sqrt(w_norm);
  v_norm = std::sqrt(v_norm);
  for (auto& vj : v) vj *= 0.3 / v_norm;
  const double b = solve_bias(config.target_avg_cvr,
                              [&](double bias) { return gaussian_logistic_mean(bias, w_norm); });
  SyntheticTruth truth;
  truth.drift = config.drift;
  truth.cvr_fn = [w, b, drift = config.drift](const Features& x, Seconds t) {
    double z = b + drift.logit_shift(t);
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x.continuous.at(j);
    return logistic(z);
  };
  truth.delay_rate_fn = [v, base_rate](const Features& x) {
    double z = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) z += v[j] * x.continuous.at(j);
    return base_rate * std::exp(z);
  };
  return truth;
}

std::vector<ClickEvent> synth_stream(const GenConfig& config, const SyntheticTruth& truth) {
  config.validate();
  Rng rng(config.seed);
  std::uniform_real_distribution<double> clock(0.0, config.horizon);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<FeatureRef> cells;
  std::size_t dims = 0;
  if (const auto* space = std::get_if<DiscreteSpace>(&config.feature_space)) {
    for (std::size_t k = 0; k < space->cells; ++k) {
      cells.push_back(make_features({static_cast<std::int32_t>(k)}));
    }
  } else {
    dims = std::get<ContinuousSpace>(config.feature_space).dims;
  }

  std::vector<ClickEvent> events;
  events.reserve(config.n_events);
  for (std::size_t i = 0; i < config.n_events; ++i) {
    ClickEvent ev;
    ev.click_ts = clock(rng);
    if (!cells.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
      ev.features = cells[pick(rng)];
    } else {
      std::vector<double> x(dims);
      for (auto& xj : x) xj = normal(rng);
      ev.features = make_features({}, std::move(x));
    }
    const double p = truth.cvr(*ev.features, ev.click_ts);
    if (!(p >= 0.0 && p <= 1.0)) throw NumericError("cvr_fn returned a value outside [0, 1]");
    if (unit(rng) < p) {
      const double rate = truth.delay_rate(*ev.features);
      if (!(rate > 0.0) || !std::isfinite(rate)) {
        throw NumericError("delay_rate_fn must return a finite positive rate");
      }
      std::exponential_distribution<double> delay(rate);
      ev.conversion_ts = ev.click_ts + delay(rng);
    }
    events.push_back(std::move(ev));
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const ClickEvent& a, const ClickEvent& b) { return a.click_ts < b.click_ts; });
  for (std::size_t i = 0; i < events.size(); ++i) events[i].id = static_cast<std::int64_t>(i);
  return events;
}

ClickEvent parse_criteo_line(std::string_view line, std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (cols.size() != CriteoFormat::kColumns) {
    throw ParseError(line_no, "expected " + std::to_string(CriteoFormat::kColumns) +
                                  " tab-separated columns, got " + std::to_string(cols.size()));
  }
  ClickEvent ev;
  if (!parse_number(cols[0], ev.click_ts)) {
    throw ParseError(line_no, "non-numeric click timestamp '" + std::string(cols[0]) + "'");
  }
  if (!cols[1].empty()) {
    double conv = 0.0;
    if (!parse_number(cols[1], conv)) {
      throw ParseError(line_no, "non-numeric conversion timestamp '" + std::string(cols[1]) + "'");
    }
    if (conv < ev.click_ts) throw ParseError(line_no, "conversion precedes click");
    ev.conversion_ts = conv;
  }
  Features f;
  for (std::size_t j = 0; j < CriteoFormat::kContinuous; ++j) {
    const auto field = cols[2 + j];
    double v = 0.0;
    if (!field.empty()) {
      if (!parse_number(field, v)) {
        throw ParseError(line_no, "non-numeric continuous feature '" + std::string(field) + "'");
      }
      v = std::copysign(std::log1p(std::abs(v)), v);
    }
    f.continuous.push_back(v);
  }
  for (std::size_t j = 0; j < CriteoFormat::kCategorical; ++j) {
    const auto field = cols[2 + CriteoFormat::kContinuous + j];
    f.categorical.push_back(
        field.empty() ? CriteoFormat::kMissing
                      : static_cast<std::int32_t>(
                            1 + fnv1a(field) % (CriteoFormat::kHashSpace - 1)));
  }
  ev.features = std::make_shared<const Features>(std::move(f));
  return ev;
}

std::vector<ClickEvent> read_criteo(std::istream& in) {
  std::vector<ClickEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto ev = parse_criteo_line(line, line_no);
    ev.id = static_cast<std::int64_t>(events.size());
    events.push_back(std::move(ev));
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const ClickEvent& a, const ClickEvent& b) { return a.click_ts < b.click_ts; });
  if (!events.empty()) {
    const Seconds epoch = events.front().click_ts;
    for (auto& ev : events) {
      ev.click_ts -= epoch;
      if (ev.conversion_ts) *ev.conversion_ts -= epoch;
    }
  }
  return events;
}

void require_sorted_by_click(const std::vector<ClickEvent>& stream) {
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (stream[i].click_ts < stream[i - 1].click_ts) {
      throw OrderingError("stream not sorted by click time at position " + std::to_string(i));
    }
  }
}

StreamSplit split_pretrain_stream(const std::vector<ClickEvent>& stream) {
  require_sorted_by_click(stream);
  const auto half = static_cast<std::ptrdiff_t>(stream.size() / 2);
  StreamSplit split;
  split.pretrain.assign(stream.begin(), stream.begin() + half);
  split.streaming.assign(stream.begin() + half, stream.end());
  if (!split.streaming.empty()) split.split_ts = split.streaming.front().click_ts;
  return split;
}

}  // namespace esdfm
