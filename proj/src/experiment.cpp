#include "esdfm/experiment.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "esdfm/relabel.hpp"

namespace esdfm {

using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where.empty() ? key : where + "." + key, e.what());
  }
}

std::string_view drift_name(Drift::Kind k) {
  switch (k) {
    case Drift::Kind::None: return "none";
    case Drift::Kind::Sine: return "sine";
    case Drift::Kind::Trend: return "trend";
  }
  return "none";
}

Drift::Kind parse_drift(const std::string& s) {
  if (s == "none") return Drift::Kind::None;
  if (s == "sine") return Drift::Kind::Sine;
  if (s == "trend") return Drift::Kind::Trend;
  throw ConfigError("data.drift.kind", "unknown drift '" + s + "'");
}

bool uses(const ExperimentConfig& config, Weighting w) {
  return std::any_of(config.methods.begin(), config.methods.end(), [&](MethodName m) {
    return MethodSpec::standard(m, config.ideal_weights).weighting == w;
  });
}

bool uses(const ExperimentConfig& config, MethodName name) {
  return std::find(config.methods.begin(), config.methods.end(), name) != config.methods.end();
}

ArchSpec make_arch(const ExperimentConfig& config) {
  ArchSpec arch;
  if (config.data.kind == DataSource::Kind::Criteo) {
    arch.vocab_sizes.assign(CriteoFormat::kCategorical, CriteoFormat::kHashSpace);
    arch.n_continuous = CriteoFormat::kContinuous;
  } else if (const auto* d = std::get_if<DiscreteSpace>(&config.data.synthetic.feature_space)) {
    arch.vocab_sizes = {d->cells};
  } else {
    arch.n_continuous = std::get<ContinuousSpace>(config.data.synthetic.feature_space).dims;
  }
  arch.embed_dim = config.model.embed_dim;
  arch.hidden = config.model.hidden;
  arch.leaky_slope = config.model.leaky_slope;
  return arch;
}

std::vector<const Features*> feature_ptrs(const std::vector<ClickEvent>& events) {
  std::vector<const Features*> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.features.get());
  return out;
}

TrainConfig seeded(TrainConfig train, std::uint64_t seed, std::uint64_t stream) {
  train.seed = seed * 1000003u + stream;
  return train;
}

// Per-bucket estimator samples whose attribution window closes inside the bucket.
std::vector<std::vector<TwoHeadSample>> matured_buckets(const ExperimentConfig& config,
                                                        const Prepared& prepared,
                                                        const std::vector<ClickEvent>& streaming,
                                                        std::uint64_t seed) {
  Rng rng(seed);
  const auto samples = build_dp_rn_dataset(streaming, ElapsedPolicy::dirac(config.elapsed_c),
                                           config.window(), rng);
  std::vector<std::vector<TwoHeadSample>> out(prepared.n_buckets);
  for (std::size_t i = 0; i < streaming.size(); ++i) {
    const double slot =
        std::floor((streaming[i].click_ts + config.window() - prepared.split.split_ts) / config.bucket_width);
    if (slot < static_cast<double>(prepared.n_buckets)) {
      out[static_cast<std::size_t>(slot)].push_back(to_two_head(samples[i]));
    }
  }
  return out;
}

}  // namespace

Seconds ExperimentConfig::window() const {
  if (attribution_window) return *attribution_window;
  return data.kind == DataSource::Kind::Criteo ? kThirtyDays : data.synthetic.horizon;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("methods", "at least one method is required");
  if (!(elapsed_c >= 0.0)) throw ConfigError("elapsed_c", "must be non-negative");
  if (!(disturbance >= 0.0 && disturbance <= 1.0)) throw ConfigError("disturbance", "must lie in [0, 1]");
  if (!(bucket_width > 0.0)) throw ConfigError("bucket_width", "must be positive");
  if (seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  if (threads == 0) throw ConfigError("threads", "must be at least 1");
  if (attribution_window && !(*attribution_window > 0.0)) {
    throw ConfigError("attribution_window", "must be positive");
  }
  if (model.embed_dim == 0) throw ConfigError("model.embed_dim", "must be positive");
  for (auto h : model.hidden) {
    if (h == 0) throw ConfigError("model.hidden", "layer widths must be positive");
  }
  train.validate();
  if (data.kind == DataSource::Kind::Criteo) {
    if (data.criteo_path.empty()) throw ConfigError("data.path", "a Criteo log path is required");
    if (ideal_weights) throw ConfigError("ideal_weights", "needs synthetic ground truth");
    return;
  }
  data.synthetic.validate();
  if (!data.cell_cvr.empty() || !data.cell_rate.empty()) {
    const auto* d = std::get_if<DiscreteSpace>(&data.synthetic.feature_space);
    if (!d) throw ConfigError("data.cell_cvr", "explicit cells need a discrete feature space");
    if (data.cell_cvr.size() != d->cells || data.cell_rate.size() != d->cells) {
      throw ConfigError("data.cell_cvr", "need one cvr and one rate per cell");
    }
  }
}

ExperimentConfig config_from_json(const json& doc) {
  check_keys(doc,
             {"schema_version", "data", "elapsed_c", "methods", "bucket_width", "disturbance", "seeds",
              "output_dir", "train", "model", "pretrain_epochs", "estimator_epochs", "ideal_weights",
              "estimator_streaming", "attribution_window", "threads"},
             "");
  ExperimentConfig c;
  int version = ExperimentConfig::kSchemaVersion;
  read(doc, "schema_version", version, "");
  if (version != ExperimentConfig::kSchemaVersion) {
    throw ConfigError("schema_version", "unsupported version " + std::to_string(version));
  }
  if (doc.contains("data")) {
    const auto& d = doc.at("data");
    check_keys(d,
               {"source", "path", "n_events", "horizon", "feature_space", "target_avg_cvr", "delay_scale",
                "drift", "cell_cvr", "cell_rate"},
               "data");
    std::string source = "synthetic";
    read(d, "source", source, "data");
    if (source == "criteo") {
      c.data.kind = DataSource::Kind::Criteo;
    } else if (source != "synthetic") {
      throw ConfigError("data.source", "expected 'synthetic' or 'criteo'");
    }
    read(d, "path", c.data.criteo_path, "data");
    auto& g = c.data.synthetic;
    read(d, "n_events", g.n_events, "data");
    read(d, "horizon", g.horizon, "data");
    read(d, "target_avg_cvr", g.target_avg_cvr, "data");
    read(d, "delay_scale", g.delay_scale, "data");
    read(d, "cell_cvr", c.data.cell_cvr, "data");
    read(d, "cell_rate", c.data.cell_rate, "data");
    if (d.contains("feature_space")) {
      const auto& fs = d.at("feature_space");
      check_keys(fs, {"kind", "cells", "dims"}, "data.feature_space");
      std::string kind = "discrete";
      read(fs, "kind", kind, "data.feature_space");
      if (kind == "discrete") {
        DiscreteSpace s;
        read(fs, "cells", s.cells, "data.feature_space");
        g.feature_space = s;
      } else if (kind == "continuous") {
        ContinuousSpace s;
        read(fs, "dims", s.dims, "data.feature_space");
        g.feature_space = s;
      } else {
        throw ConfigError("data.feature_space.kind", "expected 'discrete' or 'continuous'");
      }
    }
    if (d.contains("drift")) {
      const auto& dr = d.at("drift");
      check_keys(dr, {"kind", "amplitude", "period"}, "data.drift");
      std::string kind = "none";
      read(dr, "kind", kind, "data.drift");
      g.drift.kind = parse_drift(kind);
      read(dr, "amplitude", g.drift.amplitude, "data.drift");
      read(dr, "period", g.drift.period, "data.drift");
    }
    g.drift.horizon = g.horizon;
  }
  read(doc, "elapsed_c", c.elapsed_c, "");
  if (doc.contains("methods")) {
    std::vector<std::string> names;
    read(doc, "methods", names, "");
    c.methods.clear();
    for (const auto& n : names) c.methods.push_back(parse_method(n));
  }
  read(doc, "bucket_width", c.bucket_width, "");
  read(doc, "disturbance", c.disturbance, "");
  read(doc, "seeds", c.seeds, "");
  read(doc, "output_dir", c.output_dir, "");
  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    check_keys(t, {"learning_rate", "l2", "batch_size", "passes_per_bucket", "clamp_eps"}, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "l2", c.train.l2_strength, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "passes_per_bucket", c.train.passes_per_bucket, "train");
    read(t, "clamp_eps", c.train.clamp_eps, "train");
  }
  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    check_keys(m, {"hidden", "embed_dim", "leaky_slope"}, "model");
    read(m, "hidden", c.model.hidden, "model");
    read(m, "embed_dim", c.model.embed_dim, "model");
    read(m, "leaky_slope", c.model.leaky_slope, "model");
  }
  read(doc, "pretrain_epochs", c.pretrain_epochs, "");
  read(doc, "estimator_epochs", c.estimator_epochs, "");
  read(doc, "ideal_weights", c.ideal_weights, "");
  read(doc, "estimator_streaming", c.estimator_streaming, "");
  if (doc.contains("attribution_window")) {
    Seconds w = 0.0;
    read(doc, "attribution_window", w, "");
    c.attribution_window = w;
  }
  read(doc, "threads", c.threads, "");
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json data{{"source", c.data.kind == DataSource::Kind::Criteo ? "criteo" : "synthetic"}};
  if (c.data.kind == DataSource::Kind::Criteo) {
    data["path"] = c.data.criteo_path;
  } else {
    const auto& g = c.data.synthetic;
    data["n_events"] = g.n_events;
    data["horizon"] = g.horizon;
    data["target_avg_cvr"] = g.target_avg_cvr;
    data["delay_scale"] = g.delay_scale;
    if (const auto* d = std::get_if<DiscreteSpace>(&g.feature_space)) {
      data["feature_space"] = {{"kind", "discrete"}, {"cells", d->cells}};
    } else {
      data["feature_space"] = {{"kind", "continuous"},
                               {"dims", std::get<ContinuousSpace>(g.feature_space).dims}};
    }
    data["drift"] = {{"kind", drift_name(g.drift.kind)},
                     {"amplitude", g.drift.amplitude},
                     {"period", g.drift.period}};
    if (!c.data.cell_cvr.empty()) {
      data["cell_cvr"] = c.data.cell_cvr;
      data["cell_rate"] = c.data.cell_rate;
    }
  }
  std::vector<std::string> methods;
  for (auto m : c.methods) methods.emplace_back(to_string(m));
  json doc{{"schema_version", ExperimentConfig::kSchemaVersion},
           {"data", data},
           {"elapsed_c", c.elapsed_c},
           {"methods", methods},
           {"bucket_width", c.bucket_width},
           {"disturbance", c.disturbance},
           {"seeds", c.seeds},
           {"output_dir", c.output_dir},
           {"train",
            {{"learning_rate", c.train.learning_rate},
             {"l2", c.train.l2_strength},
             {"batch_size", c.train.batch_size},
             {"passes_per_bucket", c.train.passes_per_bucket},
             {"clamp_eps", c.train.clamp_eps}}},
           {"model",
            {{"hidden", c.model.hidden}, {"embed_dim", c.model.embed_dim}, {"leaky_slope", c.model.leaky_slope}}},
           {"pretrain_epochs", c.pretrain_epochs},
           {"estimator_epochs", c.estimator_epochs},
           {"ideal_weights", c.ideal_weights},
           {"estimator_streaming", c.estimator_streaming},
           {"threads", c.threads}};
  if (c.attribution_window) doc["attribution_window"] = *c.attribution_window;
  return doc;
}

Dataset load_dataset(const ExperimentConfig& config, std::uint64_t seed) {
  Dataset out;
  if (config.data.kind == DataSource::Kind::Criteo) {
    std::ifstream in(config.data.criteo_path);
    if (!in) throw InputError("cannot open " + config.data.criteo_path);
    out.events = read_criteo(in);
    return out;
  }
  GenConfig g = config.data.synthetic;
  g.seed = seed;
  auto truth = config.data.cell_cvr.empty()
                   ? SyntheticTruth::random(g)
                   : SyntheticTruth::discrete(config.data.cell_cvr, config.data.cell_rate, g.drift);
  out.events = synth_stream(g, truth);
  out.truth = std::make_shared<const SyntheticTruth>(std::move(truth));
  return out;
}

namespace {

Prepared prepare_base(const ExperimentConfig& config, const Dataset& data, std::uint64_t seed) {
  Prepared p;
  p.split = split_pretrain_stream(data.events);
  if (p.split.streaming.empty()) throw InputError("stream too short to split");
  p.arch = make_arch(config);
  const Seconds last = p.split.streaming.back().click_ts;
  p.n_buckets = static_cast<std::size_t>(std::floor((last - p.split.split_ts) / config.bucket_width)) + 1;
  if (config.data.kind == DataSource::Kind::Synthetic) {
    const double span = config.data.synthetic.horizon - p.split.split_ts;
    p.n_buckets = std::max<std::size_t>(
        p.n_buckets, static_cast<std::size_t>(std::ceil(span / config.bucket_width)));
  }

  const auto ptrs = feature_ptrs(p.split.pretrain);
  const auto standardizer = Standardizer<double>::fit(FeatureBatch(ptrs), p.arch.n_continuous);
  p.pretrained = make_cvr_model(p.arch, seed);
  p.pretrained.standardizer() = standardizer;
  std::vector<LabeledExample> labeled;
  labeled.reserve(p.split.pretrain.size());
  for (const auto& ev : p.split.pretrain) {
    labeled.push_back({ev.features.get(), ev.converted() ? 1.0 : 0.0, 1.0});
  }
  auto adam = AdamState<double>::zeros(p.pretrained.params().size());
  fit(p.pretrained, labeled, seeded(config.train, seed, 1), config.pretrain_epochs, adam);
  p.estimators.truth = data.truth;
  return p;
}

void fit_estimators(const ExperimentConfig& config, Prepared& p, std::uint64_t seed) {
  const auto policy = ElapsedPolicy::dirac(config.elapsed_c);
  ArchSpec two = p.arch;
  two.n_outputs = 2;
  p.estimators.dual_head.reset();
  p.estimators.fsiw.reset();
  p.estimators.dfm.reset();
  if (uses(config, Weighting::Es)) {
    Rng rng(seed);
    auto est = std::make_shared<DualHeadEstimator>(two, seed + 2);
    est->net().standardizer() = p.pretrained.standardizer();
    est->fit(build_dp_rn_dataset(p.split.pretrain, policy, config.window(), rng),
             seeded(config.train, seed, 2), config.estimator_epochs);
    p.estimators.dual_head = std::move(est);
  }
  if (uses(config, Weighting::Fsiw)) {
    Rng rng(seed);
    auto est = std::make_shared<FsiwEstimators>(two, seed + 3);
    est->net().standardizer() = p.pretrained.standardizer();
    est->fit(build_fsiw_dataset(p.split.pretrain, policy, config.window(), rng),
             seeded(config.train, seed, 3), config.estimator_epochs);
    p.estimators.fsiw = std::move(est);
  }
  if (uses(config, MethodName::Dfm)) {
    const auto samples = dfm_pretrain_samples(p.split.pretrain, config.window());
    double delay_sum = 0.0;
    double converters = 0.0;
    for (const auto& s : samples) {
      if (s.observed_label == 1) {
        delay_sum += *s.delay;
        converters += 1.0;
      }
    }
    auto dfm = std::make_shared<DfmModel>(two, seed + 4);
    dfm->net().standardizer() = p.pretrained.standardizer();
    if (converters > 0.0 && delay_sum > 0.0) dfm->set_base_rate(converters / delay_sum);
    dfm->fit(samples, seeded(config.train, seed, 4), config.pretrain_epochs);
    p.estimators.dfm = std::move(dfm);
  }
}

}  // namespace

Prepared prepare(const ExperimentConfig& config, const Dataset& data, std::uint64_t seed) {
  config.validate();
  Prepared p = prepare_base(config, data, seed);
  fit_estimators(config, p, seed);
  return p;
}

const StreamReport& SeedRun::report(MethodName name) const {
  for (const auto& r : reports) {
    if (r.method == to_string(name)) return r;
  }
  throw ConfigError(std::string(to_string(name)), "method was not run");
}

SeedRun run_prepared(const ExperimentConfig& config, const Dataset& data, const Prepared& prepared,
                     std::uint64_t seed) {
  (void)data;
  config.validate();
  SeedRun run;
  run.seed = seed;
  std::vector<ClickEvent> streaming = prepared.split.streaming;
  if (config.disturbance > 0.0) streaming = disturb(streaming, {config.disturbance, seed});
  run.observable_fraction = observable_fraction(streaming, config.elapsed_c);
  const auto eval = bucketize(streaming, config.bucket_width, prepared.split.split_ts, prepared.n_buckets);
  const auto policy = ElapsedPolicy::dirac(config.elapsed_c);
  for (std::size_t k = 0; k < config.methods.size(); ++k) {
    const auto spec = MethodSpec::standard(config.methods[k], config.ideal_weights);
    Method method = build_method(spec, prepared.pretrained, prepared.estimators,
                                 seeded(config.train, seed, 10 + k), policy);
    Rng rng(seed);
    const auto train = bucketize(method.training_stream(streaming, rng), config.bucket_width,
                                 prepared.split.split_ts, prepared.n_buckets);
    std::vector<std::vector<TwoHeadSample>> matured;
    if (config.estimator_streaming && spec.weighting == Weighting::Es) {
      matured = matured_buckets(config, prepared, streaming, seed);
    }
    run.reports.push_back(run_streaming_experiment(method, train, eval, matured));
  }
  if (uses(config, MethodName::Vanilla) && uses(config, MethodName::Oracle)) {
    const auto vanilla = run.report(MethodName::Vanilla).pooled;
    const auto oracle = run.report(MethodName::Oracle).pooled;
    for (auto& r : run.reports) r.relative = relative_metrics(r.pooled, vanilla, oracle);
  }
  return run;
}

SeedRun run_seed(const ExperimentConfig& config, const Dataset& data, std::uint64_t seed) {
  return run_prepared(config, data, prepare(config, data, seed), seed);
}

std::vector<SweepRow> sweep_elapsed(const ExperimentConfig& config, std::span<const Seconds> c_values) {
  config.validate();
  if (c_values.size() < 2) throw ConfigError("c_values", "a sweep needs at least two values");
  for (auto c : c_values) {
    if (!(c >= 0.0)) throw ConfigError("c_values", "elapsed times must be non-negative");
  }
  ExperimentConfig base = config;
  base.methods = {MethodName::EsDfm};
  std::vector<std::function<std::vector<SweepRow>()>> jobs;
  for (auto seed : config.seeds) {
    jobs.push_back([&base, c_values, seed] {
      const Dataset data = load_dataset(base, seed);
      const Prepared common = prepare_base(base, data, seed);
      std::vector<SweepRow> rows;
      for (auto c : c_values) {
        ExperimentConfig cfg = base;
        cfg.elapsed_c = c;
        Prepared p = common;
        fit_estimators(cfg, p, seed);
        const auto run = run_prepared(cfg, data, p, seed);
        rows.push_back({c, seed, run.observable_fraction, run.reports.front().pooled});
      }
      return rows;
    });
  }
  std::vector<SweepRow> rows;
  for (auto& part : run_jobs(std::move(jobs), config.threads)) rows.insert(rows.end(), part.begin(), part.end());
  return rows;
}

std::vector<RobustnessRow> robustness(const ExperimentConfig& config, std::span<const double> d_values) {
  config.validate();
  for (auto d : d_values) {
    if (!(d >= 0.0 && d <= 1.0)) throw ConfigError("d_values", "disturbance must lie in [0, 1]");
  }
  std::vector<std::function<std::vector<RobustnessRow>()>> jobs;
  for (auto seed : config.seeds) {
    jobs.push_back([&config, d_values, seed] {
      const Dataset data = load_dataset(config, seed);
      const Prepared prepared = prepare(config, data, seed);
      std::vector<RobustnessRow> rows;
      for (auto d : d_values) {
        ExperimentConfig cfg = config;
        cfg.disturbance = d;
        const auto run = run_prepared(cfg, data, prepared, seed);
        for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
          rows.push_back({d, cfg.methods[k], seed, run.reports[k].pooled});
        }
      }
      return rows;
    });
  }
  std::vector<RobustnessRow> rows;
  for (auto& part : run_jobs(std::move(jobs), config.threads)) rows.insert(rows.end(), part.begin(), part.end());
  return rows;
}

double observable_fraction(const std::vector<ClickEvent>& events, Seconds c) {
  double converters = 0.0;
  double observed = 0.0;
  for (const auto& e : events) {
    if (!e.converted()) continue;
    converters += 1.0;
    if (e.delay() <= c) observed += 1.0;
  }
  return converters > 0.0 ? observed / converters : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace esdfm
