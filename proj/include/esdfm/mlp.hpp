#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "esdfm/errors.hpp"
#include "esdfm/types.hpp"

namespace esdfm {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// A batch is a view over feature records owned elsewhere.
using FeatureBatch = std::span<const Features* const>;

struct ArchSpec {
  std::vector<std::size_t> vocab_sizes;  // one entry per categorical field
  std::size_t n_continuous = 0;
  std::size_t embed_dim = 8;
  std::vector<std::size_t> hidden{256, 256, 128};
  std::size_t n_outputs = 1;
  double leaky_slope = 0.01;

  std::size_t input_dim() const { return vocab_sizes.size() * embed_dim + n_continuous; }
  bool operator==(const ArchSpec&) const = default;
};

/// Fixed affine standardization of the continuous inputs, fitted once on the
/// pre-training data.
template <typename Scalar>
struct Standardizer {
  VectorX<Scalar> mean;
  VectorX<Scalar> inv_scale;

  static Standardizer identity(std::size_t n) {
    return {VectorX<Scalar>::Zero(static_cast<Eigen::Index>(n)),
            VectorX<Scalar>::Ones(static_cast<Eigen::Index>(n))};
  }

  static Standardizer fit(FeatureBatch data, std::size_t n) {
    auto s = identity(n);
    if (data.empty() || n == 0) return s;
    const auto dims = static_cast<Eigen::Index>(n);
    VectorX<Scalar> sum = VectorX<Scalar>::Zero(dims);
    VectorX<Scalar> sq = VectorX<Scalar>::Zero(dims);
    for (const Features* f : data) {
      for (Eigen::Index j = 0; j < dims; ++j) {
        const auto v = static_cast<Scalar>(f->continuous.at(static_cast<std::size_t>(j)));
        sum(j) += v;
        sq(j) += v * v;
      }
    }
    const auto count = static_cast<Scalar>(data.size());
    s.mean = sum / count;
    for (Eigen::Index j = 0; j < dims; ++j) {
      const Scalar var = sq(j) / count - s.mean(j) * s.mean(j);
      s.inv_scale(j) = var > Scalar(1e-12) ? Scalar(1) / std::sqrt(var) : Scalar(1);
    }
    return s;
  }
};

/// Feed-forward network: per-field embeddings and standardized continuous
/// inputs, leaky-ReLU hidden layers, `n_outputs` linear logits.
///
/// All parameters live in one flat vector; embedding tables and layer weights
/// are column-major views into it.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  using ConstMap = Eigen::Map<const Matrix>;
  using Map = Eigen::Map<Matrix>;

  struct Cache {
    Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> ids;  // fields x batch
    std::vector<Matrix> pre;  // pre-activations of hidden layers
    std::vector<Matrix> act;  // act[0] = input, act[l+1] = leaky(pre[l])
  };

  Mlp() = default;

  Mlp(ArchSpec arch, std::uint64_t seed) : arch_(std::move(arch)) {
    layout();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> emb(-0.05, 0.05);
    for (std::size_t f = 0; f < arch_.vocab_sizes.size(); ++f) {
      auto e = embedding(f);
      for (Eigen::Index k = 0; k < e.size(); ++k) e.data()[k] = static_cast<Scalar>(emb(rng));
    }
    for (std::size_t l = 0; l < n_layers(); ++l) {
      auto w = weight(l);
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = static_cast<Scalar>(u(rng));
    }
    standardizer_ = Standardizer<Scalar>::identity(arch_.n_continuous);
  }

  const ArchSpec& arch() const { return arch_; }
  std::size_t n_layers() const { return arch_.hidden.size() + 1; }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  Standardizer<Scalar>& standardizer() { return standardizer_; }
  const Standardizer<Scalar>& standardizer() const { return standardizer_; }

  /// 1 for entries subject to L2 (embeddings and weights), 0 for biases.
  const Vector& l2_mask() const { return l2_mask_; }

  Map embedding(std::size_t field) {
    return {params_.data() + emb_offset_[field], emb_dim(), vocab(field)};
  }
  ConstMap embedding(std::size_t field) const {
    return {params_.data() + emb_offset_[field], emb_dim(), vocab(field)};
  }
  Map weight(std::size_t l) { return {params_.data() + w_offset_[l], out_dim(l), in_dim(l)}; }
  ConstMap weight(std::size_t l) const {
    return {params_.data() + w_offset_[l], out_dim(l), in_dim(l)};
  }
  Map bias(std::size_t l) { return {params_.data() + b_offset_[l], out_dim(l), 1}; }
  ConstMap bias(std::size_t l) const { return {params_.data() + b_offset_[l], out_dim(l), 1}; }

  /// Sets the output layer to zero so every logit is 0.
  void zero_output_layer() {
    weight(n_layers() - 1).setZero();
    bias(n_layers() - 1).setZero();
  }

  Matrix input(FeatureBatch batch, Cache* cache = nullptr) const {
    const auto fields = arch_.vocab_sizes.size();
    const auto ed = emb_dim();
    const auto b = static_cast<Eigen::Index>(batch.size());
    Matrix x(static_cast<Eigen::Index>(arch_.input_dim()), b);
    if (cache) cache->ids.resize(static_cast<Eigen::Index>(fields), b);
    for (Eigen::Index i = 0; i < b; ++i) {
      const Features& f = *batch[static_cast<std::size_t>(i)];
      if (f.categorical.size() != fields) {
        throw InputError("expected " + std::to_string(fields) + " categorical fields, got " +
                         std::to_string(f.categorical.size()));
      }
      if (f.continuous.size() != arch_.n_continuous) {
        throw InputError("expected " + std::to_string(arch_.n_continuous) +
                         " continuous features, got " + std::to_string(f.continuous.size()));
      }
      for (std::size_t k = 0; k < fields; ++k) {
        const auto id = f.categorical[k];
        if (id < 0 || static_cast<std::size_t>(id) >= arch_.vocab_sizes[k]) {
          throw InputError("categorical id " + std::to_string(id) + " outside field " +
                           std::to_string(k) + " vocabulary");
        }
        x.block(static_cast<Eigen::Index>(k) * ed, i, ed, 1) = embedding(k).col(id);
        if (cache) cache->ids(static_cast<Eigen::Index>(k), i) = id;
      }
      const auto offset = static_cast<Eigen::Index>(fields) * ed;
      for (std::size_t j = 0; j < arch_.n_continuous; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        x(offset + jj, i) = (static_cast<Scalar>(f.continuous[j]) - standardizer_.mean(jj)) *
                            standardizer_.inv_scale(jj);
      }
    }
    return x;
  }

  /// Logits, one row per output head and one column per sample.
  Matrix forward(FeatureBatch batch, Cache* cache = nullptr) const {
    Matrix a = input(batch, cache);
    if (cache) {
      cache->pre.clear();
      cache->act.clear();
      cache->act.push_back(a);
    }
    for (std::size_t l = 0; l < n_layers(); ++l) {
      Matrix z = weight(l) * a;
      z.colwise() += bias(l).col(0);
      if (l + 1 == n_layers()) return z;
      a = z.unaryExpr([s = static_cast<Scalar>(arch_.leaky_slope)](Scalar v) {
        return v > Scalar(0) ? v : s * v;
      });
      if (cache) {
        cache->pre.push_back(std::move(z));
        cache->act.push_back(a);
      }
    }
    return a;
  }

  /// Gradient with respect to params() of sum_i L_i, given dL_i/dlogits_i as
  /// the columns of `dlogits`.
  Vector backward(const Cache& cache, const Matrix& dlogits) const {
    Vector grad = Vector::Zero(params_.size());
    Matrix delta = dlogits;
    for (std::size_t l = n_layers(); l-- > 0;) {
      const Matrix& a = cache.act[l];
      Map(grad.data() + w_offset_[l], out_dim(l), in_dim(l)).noalias() = delta * a.transpose();
      Map(grad.data() + b_offset_[l], out_dim(l), 1) = delta.rowwise().sum();
      Matrix back = weight(l).transpose() * delta;
      if (l > 0) {
        const auto s = static_cast<Scalar>(arch_.leaky_slope);
        delta = back.cwiseProduct(cache.pre[l - 1].unaryExpr(
            [s](Scalar v) { return v > Scalar(0) ? Scalar(1) : s; }));
      } else {
        scatter_embeddings(cache, back, grad);
      }
    }
    return grad;
  }

 private:
  Eigen::Index emb_dim() const { return static_cast<Eigen::Index>(arch_.embed_dim); }
  Eigen::Index vocab(std::size_t f) const {
    return static_cast<Eigen::Index>(arch_.vocab_sizes[f]);
  }
  Eigen::Index in_dim(std::size_t l) const { return dims_[l]; }
  Eigen::Index out_dim(std::size_t l) const { return dims_[l + 1]; }

  void scatter_embeddings(const Cache& cache, const Matrix& dinput, Vector& grad) const {
    const auto ed = emb_dim();
    for (std::size_t k = 0; k < arch_.vocab_sizes.size(); ++k) {
      Map g(grad.data() + emb_offset_[k], ed, vocab(k));
      for (Eigen::Index i = 0; i < dinput.cols(); ++i) {
        g.col(cache.ids(static_cast<Eigen::Index>(k), i)) +=
            dinput.block(static_cast<Eigen::Index>(k) * ed, i, ed, 1);
      }
    }
  }

  void layout() {
    if (arch_.n_outputs == 0) throw ConfigError("n_outputs", "must be positive");
    if (arch_.input_dim() == 0) throw ConfigError("arch", "network has no inputs");
    if (!arch_.vocab_sizes.empty() && arch_.embed_dim == 0) {
      throw ConfigError("embed_dim", "must be positive");
    }
    Eigen::Index offset = 0;
    for (std::size_t f = 0; f < arch_.vocab_sizes.size(); ++f) {
      if (arch_.vocab_sizes[f] == 0) throw ConfigError("vocab_sizes", "empty vocabulary");
      emb_offset_.push_back(offset);
      offset += emb_dim() * vocab(f);
    }
    const Eigen::Index emb_end = offset;
    dims_.push_back(static_cast<Eigen::Index>(arch_.input_dim()));
    for (auto h : arch_.hidden) {
      if (h == 0) throw ConfigError("hidden", "layer width must be positive");
      dims_.push_back(static_cast<Eigen::Index>(h));
    }
    dims_.push_back(static_cast<Eigen::Index>(arch_.n_outputs));
    std::vector<std::pair<Eigen::Index, Eigen::Index>> weights;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      w_offset_.push_back(offset);
      weights.emplace_back(offset, dims_[l] * dims_[l + 1]);
      offset += dims_[l] * dims_[l + 1];
      b_offset_.push_back(offset);
      offset += dims_[l + 1];
    }
    params_ = Vector::Zero(offset);
    l2_mask_ = Vector::Zero(offset);
    l2_mask_.head(emb_end).setOnes();
    for (auto [start, size] : weights) l2_mask_.segment(start, size).setOnes();
  }

  ArchSpec arch_;
  Vector params_;
  Vector l2_mask_;
  Standardizer<Scalar> standardizer_;
  std::vector<Eigen::Index> emb_offset_, w_offset_, b_offset_, dims_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  VectorX<Scalar> m;
  VectorX<Scalar> v;
  std::int64_t step = 0;

  static AdamState zeros(Eigen::Index n) {
    return {VectorX<Scalar>::Zero(n), VectorX<Scalar>::Zero(n), 0};
  }
};

template <typename Scalar>
void adam_update(VectorX<Scalar>& params, const VectorX<Scalar>& grad, AdamState<Scalar>& state,
                 const AdamConfig& config) {
  if (state.m.size() != params.size()) state = AdamState<Scalar>::zeros(params.size());
  const auto b1 = static_cast<Scalar>(config.beta1);
  const auto b2 = static_cast<Scalar>(config.beta2);
  ++state.step;
  state.m = b1 * state.m + (Scalar(1) - b1) * grad;
  state.v = b2 * state.v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const auto t = static_cast<Scalar>(state.step);
  const Scalar m_corr = Scalar(1) - std::pow(b1, t);
  const Scalar v_corr = Scalar(1) - std::pow(b2, t);
  params.array() -= static_cast<Scalar>(config.learning_rate) * (state.m.array() / m_corr) /
                    ((state.v.array() / v_corr).sqrt() + static_cast<Scalar>(config.epsilon));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  return z >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-z))
                        : std::exp(z) / (Scalar(1) + std::exp(z));
}

template <typename Scalar>
Scalar clamp_probability(Scalar p, double eps) {
  const auto e = static_cast<Scalar>(eps);
  return std::min(std::max(p, e), Scalar(1) - e);
}

}  // namespace esdfm
