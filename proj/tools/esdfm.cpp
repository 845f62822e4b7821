// Command-line driver: streaming experiments, sweeps and data tools.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "esdfm/experiment.hpp"
#include "esdfm/records.hpp"

namespace fs = std::filesystem;
using namespace esdfm;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<double> elapsed_c;
  std::vector<std::string> methods;
  std::optional<double> bucket_width;
  std::optional<double> disturbance;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> output_dir;
  std::optional<std::string> criteo_path;
  std::optional<std::size_t> n_events;
  std::optional<std::size_t> threads;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;
  std::vector<std::size_t> hidden;
  bool ideal_weights = false;
  bool estimator_streaming = false;

  void attach(CLI::App& app) {
    app.add_option("-c,--config", config_path, "JSON experiment config");
    app.add_option("--elapsed-c", elapsed_c, "elapsed time c in seconds");
    app.add_option("--methods", methods, "methods to compare");
    app.add_option("--bucket-width", bucket_width, "bucket width in seconds");
    app.add_option("--disturbance", disturbance, "disturbance strength d");
    app.add_option("--seeds", seeds, "seeds");
    app.add_option("-o,--output-dir", output_dir, "output directory");
    app.add_option("--criteo", criteo_path, "Criteo conversion log (replaces synthetic data)");
    app.add_option("--n-events", n_events, "synthetic stream length");
    app.add_option("--threads", threads, "worker threads");
    app.add_option("--lr", learning_rate, "Adam learning rate");
    app.add_option("--batch-size", batch_size, "minibatch size");
    app.add_option("--hidden", hidden, "hidden layer widths");
    app.add_flag("--ideal-weights", ideal_weights, "closed-form weights from synthetic truth");
    app.add_flag("--estimator-streaming", estimator_streaming, "keep training f_dp/f_rn on matured labels");
  }

  ExperimentConfig resolve() const {
    nlohmann::json doc = nlohmann::json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw InputError("cannot open config " + config_path);
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config", e.what());
      }
    }
    ExperimentConfig c = config_from_json(doc);
    if (elapsed_c) c.elapsed_c = *elapsed_c;
    if (!methods.empty()) {
      c.methods.clear();
      for (const auto& m : methods) c.methods.push_back(parse_method(m));
    }
    if (bucket_width) c.bucket_width = *bucket_width;
    if (disturbance) c.disturbance = *disturbance;
    if (!seeds.empty()) c.seeds = seeds;
    if (output_dir) c.output_dir = *output_dir;
    if (criteo_path) {
      c.data.kind = DataSource::Kind::Criteo;
      c.data.criteo_path = *criteo_path;
    }
    if (n_events) c.data.synthetic.n_events = *n_events;
    if (threads) c.threads = *threads;
    if (learning_rate) c.train.learning_rate = *learning_rate;
    if (batch_size) c.train.batch_size = *batch_size;
    if (!hidden.empty()) c.model.hidden = hidden;
    c.ideal_weights = c.ideal_weights || ideal_weights;
    c.estimator_streaming = c.estimator_streaming || estimator_streaming;
    c.validate();
    return c;
  }
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

std::string num(double v) { return std::isnan(v) ? "" : format_double(v); }

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    for (double x : xs) r.sd += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(r.sd / static_cast<double>(xs.size() - 1));
  }
  return r;
}

void write_config(const ExperimentConfig& config) {
  fs::create_directories(config.output_dir);
  open_out(fs::path(config.output_dir) / "config.json") << config_to_json(config).dump(2) << '\n';
}

int cmd_run(const ExperimentConfig& config) {
  write_config(config);
  std::vector<std::function<SeedRun()>> jobs;
  for (auto seed : config.seeds) {
    jobs.push_back([&config, seed] { return run_seed(config, load_dataset(config, seed), seed); });
  }
  const auto runs = run_jobs(std::move(jobs), config.threads);
  const fs::path dir(config.output_dir);
  auto comparison = open_out(dir / "comparison.csv");
  comparison << "method,seed,auc,pr_auc,nll,r_auc,r_pr_auc,r_nll\n";
  std::map<std::string, std::map<std::string, std::vector<double>>> columns;
  for (const auto& run : runs) {
    for (const auto& r : run.reports) {
      const auto stem = r.method + "_seed" + std::to_string(run.seed);
      auto csv = open_out(dir / (stem + ".csv"));
      write_report_csv(csv, r);
      auto jsonl = open_out(dir / (stem + ".jsonl"));
      write_report_jsonl(jsonl, r);
      const auto rel = r.relative.value_or(RelativeMetrics{NAN, NAN, NAN});
      comparison << r.method << ',' << run.seed << ',' << num(r.pooled.auc) << ',' << num(r.pooled.pr_auc)
                 << ',' << num(r.pooled.nll) << ',' << num(rel.r_auc) << ',' << num(rel.r_pr_auc) << ','
                 << num(rel.r_nll) << '\n';
      auto& col = columns[r.method];
      col["auc"].push_back(r.pooled.auc);
      col["pr_auc"].push_back(r.pooled.pr_auc);
      col["nll"].push_back(r.pooled.nll);
      col["r_auc"].push_back(rel.r_auc);
      col["r_pr_auc"].push_back(rel.r_pr_auc);
      col["r_nll"].push_back(rel.r_nll);
    }
  }
  auto summary = open_out(dir / "summary.csv");
  summary << "method,n_seeds,metric,mean,sd\n";
  std::cout << "method      auc                pr_auc             nll\n";
  for (auto m : config.methods) {
    const std::string name(to_string(m));
    for (const char* metric : {"auc", "pr_auc", "nll", "r_auc", "r_pr_auc", "r_nll"}) {
      const auto s = mean_sd(columns[name][metric]);
      summary << name << ',' << config.seeds.size() << ',' << metric << ',' << num(s.mean) << ','
              << num(s.sd) << '\n';
    }
    std::printf("%-10s", name.c_str());
    for (const char* metric : {"auc", "pr_auc", "nll"}) {
      const auto s = mean_sd(columns[name][metric]);
      std::printf("  %.4f +- %.4f", s.mean, s.sd);
    }
    std::printf("\n");
  }
  return 0;
}

int cmd_sweep(const ExperimentConfig& config, const std::vector<double>& c_values) {
  write_config(config);
  const auto rows = sweep_elapsed(config, c_values);
  auto out = open_out(fs::path(config.output_dir) / "sweep_elapsed.csv");
  out << "c,seed,observable_fraction,auc,pr_auc,nll\n";
  for (const auto& r : rows) {
    out << format_double(r.c) << ',' << r.seed << ',' << num(r.observable_fraction) << ','
        << num(r.metrics.auc) << ',' << num(r.metrics.pr_auc) << ',' << num(r.metrics.nll) << '\n';
  }
  std::cout << "c            observable  nll (mean over seeds)\n";
  for (double c : c_values) {
    std::vector<double> frac, nll;
    for (const auto& r : rows) {
      if (r.c == c) {
        frac.push_back(r.observable_fraction);
        nll.push_back(r.metrics.nll);
      }
    }
    std::printf("%-12g %-10.4f  %.5f\n", c, mean_sd(frac).mean, mean_sd(nll).mean);
  }
  return 0;
}

int cmd_robustness(const ExperimentConfig& config, const std::vector<double>& d_values) {
  write_config(config);
  const auto rows = robustness(config, d_values);
  auto out = open_out(fs::path(config.output_dir) / "robustness.csv");
  out << "d,method,seed,auc,pr_auc,nll\n";
  for (const auto& r : rows) {
    out << format_double(r.d) << ',' << to_string(r.method) << ',' << r.seed << ',' << num(r.metrics.auc)
        << ',' << num(r.metrics.pr_auc) << ',' << num(r.metrics.nll) << '\n';
  }
  std::cout << "d      method      nll (mean over seeds)\n";
  for (double d : d_values) {
    for (auto m : config.methods) {
      std::vector<double> nll;
      for (const auto& r : rows) {
        if (r.d == d && r.method == m) nll.push_back(r.metrics.nll);
      }
      std::printf("%-6g %-10s  %.5f\n", d, std::string(to_string(m)).c_str(), mean_sd(nll).mean);
    }
  }
  return 0;
}

int cmd_gen_data(const ExperimentConfig& config, const std::string& transform) {
  fs::create_directories(config.output_dir);
  const auto seed = config.seeds.front();
  const auto data = load_dataset(config, seed);
  auto events = open_out(fs::path(config.output_dir) / "events.tsv");
  write_events(events, data.events);
  if (!transform.empty()) {
    const auto spec = MethodSpec::standard(parse_method(transform));
    Method method(spec, MlpModel{}, {}, config.train, ElapsedPolicy::dirac(config.elapsed_c));
    Rng rng(seed);
    auto samples = open_out(fs::path(config.output_dir) / ("samples_" + transform + ".tsv"));
    write_samples(samples, method.training_stream(data.events, rng));
  }
  std::cout << "wrote " << data.events.size() << " events to " << config.output_dir << '\n';
  return 0;
}

int cmd_pretrain(const ExperimentConfig& config) {
  fs::create_directories(config.output_dir);
  const auto seed = config.seeds.front();
  const auto data = load_dataset(config, seed);
  const auto prepared = prepare(config, data, seed);
  const fs::path dir(config.output_dir);
  auto out = open_out(dir / "pretrained.ckpt");
  save_checkpoint(out, prepared.pretrained);
  if (prepared.estimators.dual_head) {
    auto est = open_out(dir / "dual_head.ckpt");
    save_checkpoint(est, prepared.estimators.dual_head->net());
  }
  if (prepared.estimators.fsiw) {
    auto est = open_out(dir / "fsiw.ckpt");
    save_checkpoint(est, prepared.estimators.fsiw->net());
  }
  if (prepared.estimators.dfm) {
    auto est = open_out(dir / "dfm.ckpt");
    save_checkpoint(est, prepared.estimators.dfm->net());
  }
  std::cout << "wrote checkpoints to " << config.output_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delayed-feedback CVR experiments"};
  app.require_subcommand(1);

  Overrides run_o, sweep_o, rob_o, gen_o, pre_o;
  std::vector<double> c_values, d_values;
  std::string transform;

  auto* run = app.add_subcommand("run", "stream every configured method and compare");
  run_o.attach(*run);
  auto* sweep = app.add_subcommand("sweep-elapsed", "es_dfm metrics as a function of c");
  sweep_o.attach(*sweep);
  sweep->add_option("--c-values", c_values, "elapsed times in seconds")->required();
  auto* rob = app.add_subcommand("robustness", "metrics as a function of disturbance d");
  rob_o.attach(*rob);
  rob->add_option("--d-values", d_values, "disturbance strengths")->required();
  auto* gen = app.add_subcommand("gen-data", "write a synthetic stream and optionally a training stream");
  gen_o.attach(*gen);
  gen->add_option("--transform", transform, "method whose training stream to write");
  auto* pre = app.add_subcommand("pretrain", "fit the pre-training half and write checkpoints");
  pre_o.attach(*pre);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_o.resolve());
    if (*sweep) return cmd_sweep(sweep_o.resolve(), c_values);
    if (*rob) return cmd_robustness(rob_o.resolve(), d_values);
    if (*gen) return cmd_gen_data(gen_o.resolve(), transform);
    if (*pre) return cmd_pretrain(pre_o.resolve());
  } catch (const ConfigError& e) {
    std::cerr << "config error (" << e.field() << "): " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
