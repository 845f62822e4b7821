#include "esdfm/relabel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace esdfm {

namespace {

void sort_by_emit(std::vector<TrainingSample>& samples) {
  std::stable_sort(samples.begin(), samples.end(),
                   [](const TrainingSample& a, const TrainingSample& b) { return a.emit_ts < b.emit_ts; });
}

TrainingSample sample_of(const ClickEvent& ev, Seconds emit, int label, SampleKind kind,
                         Seconds elapsed) {
  TrainingSample s;
  s.source_id = ev.id;
  s.click_ts = ev.click_ts;
  s.emit_ts = emit;
  s.features = ev.features;
  s.observed_label = label;
  s.kind = kind;
  s.elapsed = elapsed;
  if (label == 1) s.delay = ev.delay();
  return s;
}

}  // namespace

ElapsedPolicy ElapsedPolicy::dirac(Seconds c) {
  ElapsedPolicy p;
  p.kind = Dirac{c};
  p.validate();
  return p;
}

ElapsedPolicy ElapsedPolicy::per_x(std::function<Seconds(const Features&, Rng&)> sample) {
  ElapsedPolicy p;
  p.kind = PerX{std::move(sample)};
  p.validate();
  return p;
}

Seconds ElapsedPolicy::dirac_constant() const {
  if (const auto* d = std::get_if<Dirac>(&kind)) return d->c;
  throw UnsupportedError("policy is not a Dirac distribution");
}

void ElapsedPolicy::validate() const {
  if (const auto* d = std::get_if<Dirac>(&kind)) {
    if (!(d->c >= 0.0)) throw ConfigError("elapsed", "Dirac constant must be >= 0");
  } else if (!std::get<PerX>(kind).sample) {
    throw ConfigError("elapsed", "per-x policy has no sampler");
  }
}

Seconds draw_elapsed(const ClickEvent& event, const ElapsedPolicy& policy, Rng& rng) {
  if (const auto* d = std::get_if<ElapsedPolicy::Dirac>(&policy.kind)) return d->c;
  const Seconds e = std::get<ElapsedPolicy::PerX>(policy.kind).sample(*event.features, rng);
  if (!(e >= 0.0)) throw NumericError("per-x elapsed sampler returned a negative time");
  return e;
}

std::vector<TrainingSample> transform_es(const std::vector<ClickEvent>& stream,
                                         const ElapsedPolicy& policy, Rng& rng) {
  require_sorted_by_click(stream);
  policy.validate();
  std::vector<TrainingSample> out;
  out.reserve(stream.size() + stream.size() / 4);
  for (const auto& ev : stream) {
    const Seconds e = draw_elapsed(ev, policy, rng);
    const Seconds emit = ev.click_ts + e;
    if (ev.converted() && ev.delay() <= e) {
      out.push_back(sample_of(ev, emit, 1, SampleKind::ObservedPositive, e));
    } else if (ev.converted()) {
      out.push_back(sample_of(ev, emit, 0, SampleKind::FakeNegative, e));
      out.push_back(
          sample_of(ev, *ev.conversion_ts, 1, SampleKind::DelayedPositiveDuplicate, e));
    } else {
      out.push_back(sample_of(ev, emit, 0, SampleKind::RealNegative, e));
    }
  }
  sort_by_emit(out);
  return out;
}

std::vector<TrainingSample> transform_fnw(const std::vector<ClickEvent>& stream, Rng& rng) {
  return transform_es(stream, ElapsedPolicy::dirac(0.0), rng);
}

std::vector<TrainingSample> transform_fsiw(const std::vector<ClickEvent>& stream,
                                           const ElapsedPolicy& policy, Rng& rng) {
  require_sorted_by_click(stream);
  policy.validate();
  std::vector<TrainingSample> out;
  out.reserve(stream.size());
  for (const auto& ev : stream) {
    const Seconds e = draw_elapsed(ev, policy, rng);
    const Seconds emit = ev.click_ts + e;
    if (ev.converted() && ev.delay() <= e) {
      out.push_back(sample_of(ev, emit, 1, SampleKind::ObservedPositive, e));
    } else {
      out.push_back(sample_of(ev, emit, 0,
                              ev.converted() ? SampleKind::FakeNegative : SampleKind::RealNegative,
                              e));
    }
  }
  sort_by_emit(out);
  return out;
}

std::vector<TrainingSample> transform_oracle(const std::vector<ClickEvent>& stream) {
  require_sorted_by_click(stream);
  std::vector<TrainingSample> out;
  out.reserve(stream.size());
  for (const auto& ev : stream) {
    out.push_back(ev.converted()
                      ? sample_of(ev, ev.click_ts, 1, SampleKind::ObservedPositive, 0.0)
                      : sample_of(ev, ev.click_ts, 0, SampleKind::RealNegative, 0.0));
  }
  return out;
}

void DisturbConfig::validate() const {
  if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError("strength", "must lie in [0, 1]");
}

std::vector<ClickEvent> disturb(const std::vector<ClickEvent>& stream, const DisturbConfig& config) {
  config.validate();
  std::vector<ClickEvent> out = stream;
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < out.size(); ++i) (out[i].converted() ? pos : neg).push_back(i);
  const auto k = static_cast<std::size_t>(
      std::floor(config.strength * static_cast<double>(pos.size()) + 1e-9));
  if (k == 0) return out;
  if (k > neg.size()) {
    throw ConfigError("strength", "not enough negatives to pair with " + std::to_string(k) +
                                      " positives");
  }
  Rng rng(config.seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  for (std::size_t j = 0; j < k; ++j) {
    ClickEvent& p = out[pos[j]];
    ClickEvent& n = out[neg[j]];
    std::swap(p.click_ts, n.click_ts);
    std::swap(p.conversion_ts, n.conversion_ts);
    // conversion_ts moved with the positive's click time, so delays are preserved.
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ClickEvent& a, const ClickEvent& b) { return a.click_ts < b.click_ts; });
  return out;
}

}  // namespace esdfm
