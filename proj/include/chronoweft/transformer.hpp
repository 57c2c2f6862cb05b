#pragma once

// Encoder-only transformer that maps a sparse, zero-filled series to a full
// trajectory, plus its composite loss and the randomized training loop.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "chronoweft/error.hpp"
#include "chronoweft/io.hpp"
#include "chronoweft/observe.hpp"
#include "chronoweft/random.hpp"
#include "chronoweft/tensor.hpp"
#include "chronoweft/types.hpp"

namespace chronoweft {

struct TransformerConfig {
  std::size_t input_dim = 3;
  std::size_t embed_dim = 32;
  std::size_t heads = 2;
  std::size_t blocks = 2;
  std::size_t ffn_dim = 64;
  std::size_t d_k = 32;
  std::size_t d_v = 32;
  std::size_t max_len = 256;
  double dropout = 0.2;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  double smooth_weight = 0.1;
  std::size_t data_length = 50'000;  // D_l, rows per training system
  double noise_sigma = 0.05;         // multiplicative measurement noise in training
  std::size_t steps_per_epoch = 0;   // 0: derived from data_length
  bool masked_only_loss = false;
  bool positional_encoding = true;

  [[nodiscard]] static TransformerConfig desk() { return {}; }

  [[nodiscard]] static TransformerConfig paper() {
    TransformerConfig c;
    c.embed_dim = 128;
    c.heads = 4;
    c.blocks = 4;
    c.ffn_dim = 512;
    c.d_k = 128;
    c.d_v = 128;
    c.max_len = 3000;
    c.data_length = 1'500'000;
    return c;
  }

  void validate() const {
    auto positive = [](std::size_t v, const char* what) {
      if (v == 0) throw ValidationError(std::string("transformer config: ") + what + " must be positive");
    };
    positive(input_dim, "input_dim");
    positive(embed_dim, "embed_dim");
    positive(heads, "heads");
    positive(blocks, "blocks");
    positive(ffn_dim, "ffn_dim");
    positive(d_k, "d_k");
    positive(d_v, "d_v");
    positive(max_len, "max_len");
    positive(batch_size, "batch_size");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("transformer config: dropout must lie in [0, 1)");
    if (!(lr > 0.0)) throw ValidationError("transformer config: lr must be positive");
    if (!(smooth_weight >= 0.0)) throw ValidationError("transformer config: smooth_weight must be >= 0");
    if (!(noise_sigma >= 0.0)) throw ValidationError("transformer config: noise_sigma must be >= 0");
  }

  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

// ---------------------------------------------------------------------------
// Parameters

/// Weight layout, templated so the same structure holds tensors (stored
/// parameters) or tape handles (a bound forward pass).
template <typename T>
struct HeadWeights {
  T w_q, w_k, w_v;
};

template <typename T>
struct BlockWeights {
  std::vector<HeadWeights<T>> heads;
  T w_o;
  T ln1_gain, ln1_bias;
  T w_fa, b_a, w_fb, b_b;
  T ln2_gain, ln2_bias;
};

template <typename T>
struct Weights {
  T w_p, w_b;
  std::vector<BlockWeights<T>> blocks;
  T w_head, b_head;
};

/// Calls f(name, w.field...) for every parameter, in a fixed order, across
/// any number of identically shaped weight sets.
template <typename F, typename W0, typename... W>
void visit_weights(F&& f, W0& w0, W&... w) {
  f(std::string("embed.W_p"), w0.w_p, w.w_p...);
  f(std::string("embed.W_b"), w0.w_b, w.w_b...);
  for (std::size_t b = 0; b < w0.blocks.size(); ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    for (std::size_t h = 0; h < w0.blocks[b].heads.size(); ++h) {
      const std::string q = p + "head" + std::to_string(h) + ".";
      f(q + "W_Q", w0.blocks[b].heads[h].w_q, w.blocks[b].heads[h].w_q...);
      f(q + "W_K", w0.blocks[b].heads[h].w_k, w.blocks[b].heads[h].w_k...);
      f(q + "W_V", w0.blocks[b].heads[h].w_v, w.blocks[b].heads[h].w_v...);
    }
    f(p + "W_o", w0.blocks[b].w_o, w.blocks[b].w_o...);
    f(p + "ln1.gain", w0.blocks[b].ln1_gain, w.blocks[b].ln1_gain...);
    f(p + "ln1.bias", w0.blocks[b].ln1_bias, w.blocks[b].ln1_bias...);
    f(p + "W_Fa", w0.blocks[b].w_fa, w.blocks[b].w_fa...);
    f(p + "b_a", w0.blocks[b].b_a, w.blocks[b].b_a...);
    f(p + "W_Fb", w0.blocks[b].w_fb, w.blocks[b].w_fb...);
    f(p + "b_b", w0.blocks[b].b_b, w.blocks[b].b_b...);
    f(p + "ln2.gain", w0.blocks[b].ln2_gain, w.blocks[b].ln2_gain...);
    f(p + "ln2.bias", w0.blocks[b].ln2_bias, w.blocks[b].ln2_bias...);
  }
  f(std::string("head.W"), w0.w_head, w.w_head...);
  f(std::string("head.b"), w0.b_head, w.b_head...);
}

template <typename T>
[[nodiscard]] Weights<T> shaped_like(const TransformerConfig& cfg) {
  Weights<T> w;
  w.blocks.resize(cfg.blocks);
  for (auto& b : w.blocks) b.heads.resize(cfg.heads);
  return w;
}

struct TransformerParams : Weights<Tensor> {
  TransformerConfig config;

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    visit_weights([&](const std::string&, const Tensor& t) { n += t.size(); }, *this);
    return n;
  }

  [[nodiscard]] std::vector<std::pair<std::string, Tensor*>> named() {
    std::vector<std::pair<std::string, Tensor*>> out;
    visit_weights([&](const std::string& n, Tensor& t) { out.emplace_back(n, &t); }, *this);
    return out;
  }

  [[nodiscard]] std::vector<std::pair<std::string, const Tensor*>> named() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    visit_weights([&](const std::string& n, const Tensor& t) { out.emplace_back(n, &t); }, *this);
    return out;
  }
};

/// Linear weights and biases U(±sqrt(1/fan_in)); LayerNorm gain 1, bias 0.
[[nodiscard]] inline TransformerParams init_params(const TransformerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(derive_seed(seed, "transformer-init"));
  TransformerParams p;
  static_cast<Weights<Tensor>&>(p) = shaped_like<Tensor>(cfg);
  p.config = cfg;
  const std::size_t D = cfg.input_dim, N = cfg.embed_dim;
  auto linear = [&](std::size_t in, std::size_t out) { return uniform_fan_in({in, out}, in, rng); };
  auto ones = [](std::size_t n) {
    Tensor t({1, n}, 1.0);
    t.set_requires_grad(true);
    return t;
  };
  auto zeros = [](std::size_t n) {
    Tensor t({1, n}, 0.0);
    t.set_requires_grad(true);
    return t;
  };
  p.w_p = linear(D, N);
  p.w_b = uniform_fan_in({1, N}, D, rng);
  for (auto& b : p.blocks) {
    for (auto& h : b.heads) {
      h.w_q = linear(N, cfg.d_k);
      h.w_k = linear(N, cfg.d_k);
      h.w_v = linear(N, cfg.d_v);
    }
    b.w_o = linear(cfg.heads * cfg.d_v, N);
    b.ln1_gain = ones(N);
    b.ln1_bias = zeros(N);
    b.w_fa = linear(N, cfg.ffn_dim);
    b.b_a = uniform_fan_in({1, cfg.ffn_dim}, N, rng);
    b.w_fb = linear(cfg.ffn_dim, N);
    b.b_b = uniform_fan_in({1, N}, cfg.ffn_dim, rng);
    b.ln2_gain = ones(N);
    b.ln2_bias = zeros(N);
  }
  p.w_head = linear(N, D);
  p.b_head = uniform_fan_in({1, D}, N, rng);
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass

/// PE[pos][2i] = sin(pos / 10000^(2i/N)), PE[pos][2i+1] = cos(same), pos from 0.
[[nodiscard]] inline Matrix positional_encoding(std::size_t length, std::size_t embed_dim) {
  Matrix pe(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(embed_dim));
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t c = 0; c < embed_dim; ++c) {
      const double even = static_cast<double>(c - c % 2);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, even / static_cast<double>(embed_dim));
      pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(c)) =
          c % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

using BoundWeights = Weights<Var>;

[[nodiscard]] inline BoundWeights bind(Tape& tape, const TransformerParams& p, bool requires_grad) {
  BoundWeights w = shaped_like<Var>(p.config);
  visit_weights([&](const std::string&, const Tensor& t, Var& v) { v = tape.variable(t, requires_grad); }, p, w);
  return w;
}

/// Per-call forward state.  A null rng means eval mode (dropout off).
struct ForwardPass {
  Tape& tape;
  const TransformerConfig& config;
  const BoundWeights& weights;
  Rng* dropout_rng = nullptr;

  [[nodiscard]] bool training() const noexcept { return dropout_rng != nullptr; }

  Var dropout(const Var& x) const {
    if (!training()) return x;
    return ops::dropout(x, config.dropout, *dropout_rng, true);
  }

  /// X_p = X W_p + W_b + PE for a stack of sequences of length seq_len.
  Var embed(const Var& x, std::size_t seq_len) const {
    if (seq_len > config.max_len) {
      throw SequenceLengthError("sequence length " + std::to_string(seq_len) + " exceeds max_len " +
                                std::to_string(config.max_len));
    }
    Var xp = ops::add_row(ops::matmul(x, weights.w_p), weights.w_b);
    if (!config.positional_encoding) return xp;
    const Matrix pe = positional_encoding(seq_len, config.embed_dim);
    const std::size_t segments = x.value().rows() / seq_len;
    Tensor tiled = Tensor::zeros(x.value().rows(), config.embed_dim);
    for (std::size_t s = 0; s < segments; ++s) {
      tiled.matrix().middleRows(static_cast<Eigen::Index>(s * seq_len), static_cast<Eigen::Index>(seq_len)) = pe;
    }
    return ops::add(xp, tape.constant(std::move(tiled)));
  }

  Var attention_head(const Var& xp, const HeadWeights<Var>& h, std::size_t seq_len) const {
    const Var q = ops::matmul(xp, h.w_q);
    const Var k = ops::matmul(xp, h.w_k);
    const Var v = ops::matmul(xp, h.w_v);
    return ops::attention(q, k, v, seq_len, 1.0 / std::sqrt(static_cast<double>(config.d_k)));
  }

  /// Post-norm block: LN(X + Drop(O)), then LN(X_R1 + Drop(FFN(X_R1))).
  Var encoder_block(const Var& x, const BlockWeights<Var>& b, std::size_t seq_len) const {
    std::vector<Var> heads;
    heads.reserve(b.heads.size());
    for (const auto& h : b.heads) heads.push_back(attention_head(x, h, seq_len));
    const Var o = ops::matmul(heads.size() == 1 ? heads.front() : ops::concat_cols(heads), b.w_o);
    const Var r1 = ops::layer_norm(ops::add(x, dropout(o)), b.ln1_gain, b.ln1_bias);
    const Var hidden = ops::relu(ops::add_row(ops::matmul(r1, b.w_fa), b.b_a));
    const Var f = ops::add_row(ops::matmul(hidden, b.w_fb), b.b_b);
    return ops::layer_norm(ops::add(r1, dropout(f)), b.ln2_gain, b.ln2_bias);
  }

  /// Stacked input ((segments * seq_len) x D) to stacked output.
  Var operator()(const Var& x, std::size_t seq_len) const {
    if (seq_len == 0 || x.value().rows() % seq_len != 0) {
      throw SequenceLengthError("input rows are not a multiple of the sequence length");
    }
    if (x.value().cols() != config.input_dim) {
      throw DimensionError("input has " + std::to_string(x.value().cols()) + " columns, model expects " +
                           std::to_string(config.input_dim));
    }
    Var h = embed(x, seq_len);
    for (const auto& b : weights.blocks) h = encoder_block(h, b, seq_len);
    return ops::add_row(ops::matmul(h, weights.w_head), weights.b_head);
  }
};

enum class Mode { train, eval };

/// One sequence through the model.  In train mode dropout draws come from
/// `dropout_seed`.
[[nodiscard]] inline Matrix forward(const Matrix& values, const TransformerParams& params, Mode mode = Mode::eval,
                                    std::uint64_t dropout_seed = 0) {
  if (!values.allFinite()) throw ValidationError("forward: input contains non-finite values");
  if (values.rows() == 0) throw SequenceLengthError("forward: empty sequence");
  Tape tape;
  const BoundWeights w = bind(tape, params, false);
  Rng rng = make_rng(derive_seed(dropout_seed, "dropout"));
  ForwardPass pass{tape, params.config, w, mode == Mode::train ? &rng : nullptr};
  const Var y = pass(tape.constant(Tensor::from_matrix(values)), static_cast<std::size_t>(values.rows()));
  return y.value().matrix();
}

[[nodiscard]] inline Matrix embed(const Matrix& values, const TransformerParams& params) {
  Tape tape;
  const BoundWeights w = bind(tape, params, false);
  ForwardPass pass{tape, params.config, w};
  return pass.embed(tape.constant(Tensor::from_matrix(values)), static_cast<std::size_t>(values.rows()))
      .value()
      .matrix();
}

/// softmax(Q Kᵀ / sqrt(d_k)) for one head on one sequence.
[[nodiscard]] inline Matrix attention_weights(const Matrix& xp, const Tensor& w_q, const Tensor& w_k) {
  const Matrix q = xp * w_q.matrix();
  const Matrix k = xp * w_k.matrix();
  Matrix s = q * k.transpose() / std::sqrt(static_cast<double>(w_q.cols()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    s.row(i) = (s.row(i).array() - s.row(i).maxCoeff()).exp().matrix();
    s.row(i) /= s.row(i).sum();
  }
  return s;
}

[[nodiscard]] inline Matrix attention_head(const Matrix& xp, const Tensor& w_q, const Tensor& w_k,
                                           const Tensor& w_v) {
  return attention_weights(xp, w_q, w_k) * (xp * w_v.matrix());
}

/// Eval-mode encoder block `index` of `params` applied to one sequence.
[[nodiscard]] inline Matrix encoder_block(const Matrix& x, const TransformerParams& params, std::size_t index) {
  Tape tape;
  const BoundWeights w = bind(tape, params, false);
  ForwardPass pass{tape, params.config, w};
  return pass.encoder_block(tape.constant(Tensor::from_matrix(x)), w.blocks.at(index),
                            static_cast<std::size_t>(x.rows()))
      .value()
      .matrix();
}

[[nodiscard]] inline TrajectoryMatrix reconstruct(const SparseSeries& sparse, const TransformerParams& params) {
  TrajectoryMatrix out;
  out.data = forward(sparse.values, params, Mode::eval);
  out.dt_effective = sparse.dt_effective;
  out.norm_stats = sparse.norm_stats;
  return out;
}

// ---------------------------------------------------------------------------
// Loss

struct LossTerms {
  double mse = 0.0;
  double laplacian = 0.0;
  double tv = 0.0;
  double total = 0.0;
};

/// Composite loss for one sequence and its gradient w.r.t. `pred`.
///   mse        mean squared error over all points, or over unobserved points
///              only when `observed` is given
///   laplacian  per dimension sum of (p[t-1] + p[t+1] - 2 p[t])^2 / (L-2)
///   tv         per dimension sum of |p[t+1] - p[t]| / (L-1)
/// Both smoothness terms are averaged over dimensions and act on the
/// prediction alone.  Laplacian is 0 for L < 3, TV is 0 for L < 2.
inline LossTerms reconstruction_loss(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& truth,
                                     double alpha, const BoolMatrix* observed = nullptr, Matrix* grad = nullptr) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw DimensionError("loss: prediction is " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                         ", truth is " + std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
  }
  const Eigen::Index L = pred.rows(), D = pred.cols();
  if (L == 0 || D == 0) throw UndefinedMetricError("loss: empty sequence");
  if (observed && (observed->rows() != L || observed->cols() != D)) {
    throw DimensionError("loss: mask shape does not match prediction");
  }
  LossTerms t;
  if (grad) grad->setZero(L, D);

  const Matrix diff = pred - truth;
  if (observed) {
    const auto hidden = (!observed->array()).cast<double>();
    const double count = hidden.sum();
    if (count > 0) {
      t.mse = (diff.array().square() * hidden).sum() / count;
      if (grad) grad->array() += 2.0 * diff.array() * hidden / count;
    }
  } else {
    const double n = static_cast<double>(L * D);
    t.mse = diff.squaredNorm() / n;
    if (grad) *grad += 2.0 * diff / n;
  }

  const double dims = static_cast<double>(D);
  if (L >= 3) {
    const double c = 1.0 / (static_cast<double>(L - 2) * dims);
    for (Eigen::Index i = 1; i + 1 < L; ++i) {
      for (Eigen::Index j = 0; j < D; ++j) {
        const double e = pred(i - 1, j) + pred(i + 1, j) - 2.0 * pred(i, j);
        t.laplacian += e * e * c;
        if (grad) {
          const double g = 2.0 * e * c * alpha;
          (*grad)(i - 1, j) += g;
          (*grad)(i + 1, j) += g;
          (*grad)(i, j) -= 2.0 * g;
        }
      }
    }
  }
  if (L >= 2) {
    const double c = 1.0 / (static_cast<double>(L - 1) * dims);
    for (Eigen::Index i = 0; i + 1 < L; ++i) {
      for (Eigen::Index j = 0; j < D; ++j) {
        const double d = pred(i + 1, j) - pred(i, j);
        t.tv += std::abs(d) * c;
        if (grad) {
          const double s = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * c * alpha;
          (*grad)(i + 1, j) += s;
          (*grad)(i, j) -= s;
        }
      }
    }
  }
  t.total = t.mse + alpha * (t.laplacian + t.tv);
  return t;
}

/// Mean composite loss over a stack of equal-length sequences, recorded on
/// the tape.  `observed` (optional) switches to the unobserved-only MSE.
[[nodiscard]] inline Var loss_on_tape(const Var& pred, const Matrix& truth, std::size_t seq_len, double alpha,
                                      const BoolMatrix* observed = nullptr) {
  const Tensor& pv = pred.value();
  if (static_cast<Eigen::Index>(pv.rows()) != truth.rows() || static_cast<Eigen::Index>(pv.cols()) != truth.cols()) {
    throw DimensionError("loss: prediction and truth stacks differ in shape");
  }
  const auto L = static_cast<Eigen::Index>(seq_len);
  const Eigen::Index segments = truth.rows() / L;
  Matrix grad(truth.rows(), truth.cols());
  double total = 0.0;
  for (Eigen::Index s = 0; s < segments; ++s) {
    Matrix g;
    BoolMatrix m;
    if (observed) m = observed->middleRows(s * L, L);
    total += reconstruction_loss(pv.matrix().middleRows(s * L, L), truth.middleRows(s * L, L), alpha,
                                 observed ? &m : nullptr, &g)
                 .total;
    grad.middleRows(s * L, L) = g / static_cast<double>(segments);
  }
  Tensor out({1}, total / static_cast<double>(segments));
  const std::size_t ip = pred.id();
  return pred.tape().record(std::move(out), pred.tape().requires_grad(ip),
                            [ip, grad = std::move(grad)](Tape& t, const Tensor& g) { t.accumulate(ip, grad * g[0]); });
}

// ---------------------------------------------------------------------------
// Training

struct TrainingSystem {
  std::string name;
  TrajectoryMatrix data;
};

struct TrainingRegime {
  std::vector<TrainingSystem> pool;
  std::uint64_t seed = 0;
};

struct TrainingLog {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

struct TrainResult {
  TransformerParams params;
  TrainingLog log;
};

/// One epoch covers D_l points per pool system in expectation:
/// ceil(D_l |pool| / (b_s (1 + L_max) / 2)) steps.
[[nodiscard]] inline std::size_t steps_per_epoch(const TransformerConfig& cfg, std::size_t pool_size) {
  if (cfg.steps_per_epoch > 0) return cfg.steps_per_epoch;
  const double mean_len = (1.0 + static_cast<double>(cfg.max_len)) / 2.0;
  return static_cast<std::size_t>(std::ceil(static_cast<double>(cfg.data_length * pool_size) /
                                            (static_cast<double>(cfg.batch_size) * mean_len)));
}

/// A training batch: b_s segments of one system at one length and sparsity.
struct Batch {
  std::size_t system = 0;
  std::size_t seq_len = 0;
  double sparsity = 0.0;
  Matrix inputs;  // stacked sparse values
  Matrix truth;   // stacked clean segments
  BoolMatrix observed;
};

[[nodiscard]] inline Batch draw_batch(const TrainingRegime& regime, const TransformerConfig& cfg, std::uint64_t step_seed) {
  Rng rng = make_rng(step_seed);
  Batch b;
  b.system = std::uniform_int_distribution<std::size_t>(0, regime.pool.size() - 1)(rng);
  b.seq_len = std::uniform_int_distribution<std::size_t>(1, cfg.max_len)(rng);
  b.sparsity = uniform01(rng);
  const TrajectoryMatrix& src = regime.pool[b.system].data;
  const auto L = static_cast<Eigen::Index>(b.seq_len);
  const auto rows = L * static_cast<Eigen::Index>(cfg.batch_size);
  b.inputs.resize(rows, static_cast<Eigen::Index>(cfg.input_dim));
  b.truth.resize(rows, static_cast<Eigen::Index>(cfg.input_dim));
  b.observed.resize(rows, static_cast<Eigen::Index>(cfg.input_dim));
  std::uniform_int_distribution<std::size_t> offset(0, src.length() - b.seq_len);
  for (std::size_t s = 0; s < cfg.batch_size; ++s) {
    const TrajectoryMatrix seg = src.segment(offset(rng), b.seq_len);
    ObservationSpec spec{b.sparsity, cfg.noise_sigma, 0.0, rng()};
    const SparseSeries obs = apply_observation(seg, spec);
    const auto r0 = static_cast<Eigen::Index>(s) * L;
    b.inputs.middleRows(r0, L) = obs.values;
    b.truth.middleRows(r0, L) = seg.data;
    b.observed.middleRows(r0, L) = obs.mask;
  }
  return b;
}

/// Loss and gradients for one batch; gradients come back in named() order.
struct StepResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

[[nodiscard]] inline StepResult loss_and_gradients(const TransformerParams& params, const Batch& batch,
                                                   Rng* dropout_rng) {
  const TransformerConfig& cfg = params.config;
  Tape tape;
  const BoundWeights w = bind(tape, params, true);
  ForwardPass pass{tape, cfg, w, dropout_rng};
  const Var pred = pass(tape.constant(Tensor::from_matrix(batch.inputs)), batch.seq_len);
  const Var loss = loss_on_tape(pred, batch.truth, batch.seq_len, cfg.smooth_weight,
                                cfg.masked_only_loss ? &batch.observed : nullptr);
  StepResult r;
  r.loss = loss.value()[0];
  if (!std::isfinite(r.loss)) return r;
  tape.backward(loss);
  visit_weights([&](const std::string&, const Var& v) { r.grads.push_back(v.grad()); }, w);
  return r;
}

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss, const TransformerParams&)>;

/// Randomized training: each step draws a system, a length and a sparsity,
/// then fits b_s noisy masked segments with Adam.  A non-finite loss stops
/// training with NumericalError; checkpoints written by `on_epoch` up to that
/// point remain valid.
[[nodiscard]] inline TrainResult train(const TrainingRegime& regime, const TransformerConfig& cfg,
                                       std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (regime.pool.empty()) throw InsufficientDataError("train: empty system pool");
  for (const auto& s : regime.pool) {
    if (s.data.length() < cfg.max_len) {
      throw InsufficientDataError("train: system " + s.name + " has " + std::to_string(s.data.length()) +
                                  " rows, fewer than max_len " + std::to_string(cfg.max_len));
    }
    if (s.data.dims() != cfg.input_dim) {
      throw DimensionError("train: system " + s.name + " has " + std::to_string(s.data.dims()) + " dims");
    }
  }
  TrainResult result;
  result.params = init_params(cfg, seed);
  auto named = result.params.named();
  std::vector<Tensor*> ptrs;
  std::vector<std::string> names;
  for (auto& [n, t] : named) {
    ptrs.push_back(t);
    names.push_back(n);
  }
  AdamState adam;
  adam.config.lr = cfg.lr;
  const std::size_t per_epoch = steps_per_epoch(cfg, regime.pool.size());
  Rng dropout_rng = make_rng(derive_seed(seed, "train-dropout"));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < per_epoch; ++i, ++step) {
      const Batch batch = draw_batch(regime, cfg, derive_seed(seed, "train-step", step));
      const StepResult r = loss_and_gradients(result.params, batch, cfg.dropout > 0.0 ? &dropout_rng : nullptr);
      if (!std::isfinite(r.loss)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step));
      }
      adam_step(ptrs, r.grads, adam, names);
      sum += r.loss;
    }
    const double mean_loss = sum / static_cast<double>(per_epoch);
    result.log.epoch_loss.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss, result.params);
  }
  result.log.steps = step;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint mapping

[[nodiscard]] inline io::Checkpoint to_checkpoint(const TransformerParams& p) {
  io::Checkpoint c;
  const auto& k = p.config;
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  c.attributes["kind"] = "transformer";
  c.attributes["input_dim"] = std::to_string(k.input_dim);
  c.attributes["embed_dim"] = std::to_string(k.embed_dim);
  c.attributes["heads"] = std::to_string(k.heads);
  c.attributes["blocks"] = std::to_string(k.blocks);
  c.attributes["ffn_dim"] = std::to_string(k.ffn_dim);
  c.attributes["d_k"] = std::to_string(k.d_k);
  c.attributes["d_v"] = std::to_string(k.d_v);
  c.attributes["max_len"] = std::to_string(k.max_len);
  c.attributes["dropout"] = num(k.dropout);
  c.attributes["lr"] = num(k.lr);
  c.attributes["batch_size"] = std::to_string(k.batch_size);
  c.attributes["epochs"] = std::to_string(k.epochs);
  c.attributes["smooth_weight"] = num(k.smooth_weight);
  c.attributes["data_length"] = std::to_string(k.data_length);
  c.attributes["noise_sigma"] = num(k.noise_sigma);
  c.attributes["steps_per_epoch"] = std::to_string(k.steps_per_epoch);
  c.attributes["masked_only_loss"] = k.masked_only_loss ? "1" : "0";
  c.attributes["positional_encoding"] = k.positional_encoding ? "1" : "0";
  for (const auto& [name, t] : p.named()) c.add(name, *t);
  return c;
}

[[nodiscard]] inline TransformerParams transformer_from_checkpoint(const io::Checkpoint& c) {
  if (c.attribute("kind") != "transformer") throw FormatError("checkpoint is not a transformer model");
  TransformerConfig k;
  try {
    k.input_dim = std::stoull(c.attribute("input_dim"));
    k.embed_dim = std::stoull(c.attribute("embed_dim"));
    k.heads = std::stoull(c.attribute("heads"));
    k.blocks = std::stoull(c.attribute("blocks"));
    k.ffn_dim = std::stoull(c.attribute("ffn_dim"));
    k.d_k = std::stoull(c.attribute("d_k"));
    k.d_v = std::stoull(c.attribute("d_v"));
    k.max_len = std::stoull(c.attribute("max_len"));
    k.dropout = std::stod(c.attribute("dropout"));
    k.lr = std::stod(c.attribute("lr"));
    k.batch_size = std::stoull(c.attribute("batch_size"));
    k.epochs = std::stoull(c.attribute("epochs"));
    k.smooth_weight = std::stod(c.attribute("smooth_weight"));
    k.data_length = std::stoull(c.attribute("data_length"));
    k.noise_sigma = std::stod(c.attribute("noise_sigma"));
    k.steps_per_epoch = std::stoull(c.attribute("steps_per_epoch"));
    k.masked_only_loss = c.attribute("masked_only_loss") == "1";
    k.positional_encoding = c.attribute("positional_encoding") == "1";
  } catch (const std::logic_error&) {
    throw FormatError("transformer checkpoint: malformed attribute");
  }
  // init_params fixes the expected shapes; stored tensors must match them.
  TransformerParams p = init_params(k, 0);
  for (auto& [name, t] : p.named()) {
    const Tensor& stored = c.at(name);
    if (stored.shape() != t->shape()) {
      throw FormatError("transformer checkpoint: tensor " + name + " has shape " + Tensor::shape_string(stored.shape()) +
                        ", expected " + Tensor::shape_string(t->shape()));
    }
    *t = stored;
    t->set_requires_grad(true);
  }
  return p;
}

}  // namespace chronoweft
