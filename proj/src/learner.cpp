#include "esdfm/learner.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <string>

namespace esdfm {

namespace {

constexpr std::string_view kCheckpointTag = "esdfm-checkpoint";
constexpr int kCheckpointVersion = 1;

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, ptr};
}

double read_double(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw InputError("checkpoint truncated");
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw InputError("checkpoint: bad number '" + token + "'");
  }
  return v;
}

template <typename T>
T read_value(std::istream& in, std::string_view key) {
  std::string name;
  T value{};
  if (!(in >> name) || name != key || !(in >> value)) {
    throw InputError("checkpoint: expected '" + std::string(key) + "'");
  }
  return value;
}

std::vector<std::size_t> read_sizes(std::istream& in, std::string_view key) {
  const auto n = read_value<std::size_t>(in, key);
  std::vector<std::size_t> out(n);
  for (auto& v : out) {
    if (!(in >> v)) throw InputError("checkpoint: truncated list '" + std::string(key) + "'");
  }
  return out;
}

void write_sizes(std::ostream& out, std::string_view key, const std::vector<std::size_t>& v) {
  out << key << ' ' << v.size();
  for (auto x : v) out << ' ' << x;
  out << '\n';
}

void write_vector(std::ostream& out, std::string_view key, const Eigen::VectorXd& v) {
  out << key << ' ' << v.size() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << shortest(v(i)) << '\n';
}

Eigen::VectorXd read_vector(std::istream& in, std::string_view key) {
  const auto n = read_value<Eigen::Index>(in, key);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = read_double(in);
  return v;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate", "must be positive");
  if (!(l2_strength >= 0.0)) throw ConfigError("l2_strength", "must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw ConfigError("clamp_eps", "must lie in (0, 0.5)");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must lie in (0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon", "must be positive");
  if (passes_per_bucket == 0) throw ConfigError("passes_per_bucket", "must be positive");
}

MlpModel make_cvr_model(ArchSpec arch, std::uint64_t seed) {
  arch.n_outputs = 1;
  return MlpModel(std::move(arch), seed);
}

void WeightedBatch::validate() const {
  if (static_cast<Eigen::Index>(features.size()) != labels.size() ||
      labels.size() != weights.size()) {
    throw InputError("weighted batch: features, labels and weights differ in length");
  }
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != 0.0 && labels(i) != 1.0) throw InputError("labels must be 0 or 1");
  }
  check_weights<double>(std::span<const double>(weights.data(), features.size()));
}

LossGrad weighted_ce_grad(const Eigen::MatrixXd& logits, const Eigen::VectorXd& labels,
                          const Eigen::VectorXd& weights, double eps) {
  LossGrad out;
  out.dlogits = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const double w = weights(i);
    if (w == 0.0) continue;
    const double s = sigmoid(logits(0, i));
    out.loss += w * cross_entropy(clamp_probability(s, eps), labels(i));
    out.dlogits(0, i) = w * (s - labels(i));
  }
  return out;
}

double batch_objective(const MlpModel& model, const WeightedBatch& batch, const TrainConfig& config) {
  batch.validate();
  const Eigen::VectorXd p = forward(model, FeatureBatch(batch.features), config.clamp_eps);
  const double data = weighted_ce(p, batch.labels, batch.weights);
  return data / static_cast<double>(batch.size()) + l2_penalty(model, config.l2_strength);
}

StepStats train_step(MlpModel& model, const WeightedBatch& batch, AdamState<double>& adam,
                     const TrainConfig& config) {
  batch.validate();
  return train_step_with(model, FeatureBatch(batch.features), adam, config,
                         [&](const Eigen::MatrixXd& logits) {
                           return weighted_ce_grad(logits, batch.labels, batch.weights,
                                                   config.clamp_eps);
                         });
}

double fit(MlpModel& model, const std::vector<LabeledExample>& data, const TrainConfig& config,
           std::size_t epochs, AdamState<double>& adam) {
  config.validate();
  Rng rng(config.seed);
  double last = 0.0;
  WeightedBatch batch;
  for_each_minibatch(data.size(), config.batch_size, epochs, rng, [&](std::span<const std::size_t> idx) {
    batch.features.resize(idx.size());
    batch.labels.resize(static_cast<Eigen::Index>(idx.size()));
    batch.weights.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& ex = data[idx[j]];
      batch.features[j] = ex.features;
      batch.labels(static_cast<Eigen::Index>(j)) = ex.label;
      batch.weights(static_cast<Eigen::Index>(j)) = ex.weight;
    }
    last = train_step(model, batch, adam, config).objective;
  });
  return last;
}

void save_checkpoint(std::ostream& out, const MlpModel& model) {
  const auto& arch = model.arch();
  out << kCheckpointTag << ' ' << kCheckpointVersion << '\n';
  out << "scalar double\n";
  write_sizes(out, "vocab_sizes", arch.vocab_sizes);
  out << "n_continuous " << arch.n_continuous << '\n';
  out << "embed_dim " << arch.embed_dim << '\n';
  write_sizes(out, "hidden", arch.hidden);
  out << "n_outputs " << arch.n_outputs << '\n';
  out << "leaky_slope " << shortest(arch.leaky_slope) << '\n';
  write_vector(out, "standardizer_mean", model.standardizer().mean);
  write_vector(out, "standardizer_inv_scale", model.standardizer().inv_scale);
  write_vector(out, "params", model.params());
}

MlpModel load_checkpoint(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != kCheckpointTag) throw InputError("not an esdfm checkpoint");
  if (version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  }
  if (read_value<std::string>(in, "scalar") != "double") {
    throw InputError("checkpoint scalar type must be double");
  }
  ArchSpec arch;
  arch.vocab_sizes = read_sizes(in, "vocab_sizes");
  arch.n_continuous = read_value<std::size_t>(in, "n_continuous");
  arch.embed_dim = read_value<std::size_t>(in, "embed_dim");
  arch.hidden = read_sizes(in, "hidden");
  arch.n_outputs = read_value<std::size_t>(in, "n_outputs");
  std::string key;
  if (!(in >> key) || key != "leaky_slope") throw InputError("checkpoint: expected 'leaky_slope'");
  arch.leaky_slope = read_double(in);
  MlpModel model(arch, 0);
  model.standardizer().mean = read_vector(in, "standardizer_mean");
  model.standardizer().inv_scale = read_vector(in, "standardizer_inv_scale");
  Eigen::VectorXd params = read_vector(in, "params");
  if (params.size() != model.params().size()) {
    throw InputError("checkpoint parameter count does not match its architecture");
  }
  model.params() = std::move(params);
  return model;
}

}  // namespace esdfm
