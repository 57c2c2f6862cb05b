#pragma once

// Dense f64 tensors, a tape for reverse-mode differentiation, the primitive
// ops the transformer needs, and Adam.
//
// Ops work on rank-2 tensors; a rank-1 tensor of length n is read as 1 x n
// where a row vector is expected (biases, LayerNorm gains).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "chronoweft/error.hpp"
#include "chronoweft/random.hpp"
#include "chronoweft/types.hpp"

namespace chronoweft {

class Tensor {
 public:
  using Shape = std::vector<std::size_t>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_rank();
    data_.assign(count(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_rank();
    if (data_.size() != count(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  [[nodiscard]] static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

  [[nodiscard]] static Tensor from_matrix(const Eigen::Ref<const Matrix>& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    t.matrix() = m;
    return t;
  }

  [[nodiscard]] static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  /// Rows/cols of the rank-2 reading of this tensor.
  [[nodiscard]] std::size_t rows() const {
    switch (shape_.size()) {
      case 0: return 1;
      case 1: return 1;
      case 2: return shape_[0];
      default: throw DimensionError("rank-3 tensor has no matrix view: " + shape_string(shape_));
    }
  }
  [[nodiscard]] std::size_t cols() const {
    switch (shape_.size()) {
      case 0: return 1;
      case 1: return shape_[0];
      case 2: return shape_[1];
      default: throw DimensionError("rank-3 tensor has no matrix view: " + shape_string(shape_));
    }
  }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] std::vector<double>& storage() noexcept { return data_; }

  [[nodiscard]] double& operator[](std::size_t i) { return data_[i]; }
  [[nodiscard]] double operator[](std::size_t i) const { return data_[i]; }
  [[nodiscard]] double& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

  [[nodiscard]] MatrixMap matrix() {
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
  }
  [[nodiscard]] ConstMatrixMap matrix() const {
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                          static_cast<Eigen::Index>(cols()));
  }

  [[nodiscard]] bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool flag) noexcept { requires_grad_ = flag; }

  [[nodiscard]] bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  [[nodiscard]] static std::size_t count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  [[nodiscard]] static std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_rank() const {
    if (shape_.size() > 3) throw DimensionError("tensors have at most 3 axes");
  }

  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

/// Linear-layer initialization U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
[[nodiscard]] inline Tensor uniform_fan_in(Tensor::Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data()) v = dist(rng);
  t.set_requires_grad(true);
  return t;
}

// ---------------------------------------------------------------------------
// Tape

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] Tape& tape() const { return *tape_; }
  [[nodiscard]] std::size_t id() const noexcept { return id_; }
  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Tensor& grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node.  Gradients are accumulated only when `requires_grad` is set.
  Var variable(Tensor value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, nullptr});
    return Var(this, nodes_.size() - 1);
  }

  Var constant(Tensor value) { return variable(std::move(value), false); }

  /// Records an op output.  `backward` receives the output gradient and must
  /// call accumulate() on each parent that needs it.
  Var record(Tensor value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor(), requires_grad,
                          requires_grad ? std::move(backward) : Backward()});
    return Var(this, nodes_.size() - 1);
  }

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of the last backward() root w.r.t. node `id`; zeros if the node
  /// received none.
  [[nodiscard]] const Tensor& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
  }

  void accumulate(std::size_t id, const Eigen::Ref<const Matrix>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = Tensor(n.value.shape());
    }
    n.grad.matrix() += g;
  }

  /// Reverse sweep from a scalar root.  Nodes are visited once each, in
  /// reverse creation order, which is a valid topological order.
  void backward(Var root) {
    if (nodes_.at(root.id()).value.size() != 1) {
      throw DimensionError("backward() needs a scalar root, got shape " +
                           Tensor::shape_string(nodes_[root.id()].value.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    Node& r = nodes_[root.id()];
    r.grad = Tensor(r.value.shape(), 1.0);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      // Copy: the callback may not hold references into nodes_ across calls.
      const Tensor g = n.grad;
      n.backward(*this, g);
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return tape_->grad(id_); }

// ---------------------------------------------------------------------------
// Primitive ops

namespace ops {

namespace detail {

inline void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ValidationError("operands recorded on different tapes");
}

inline bool any_grad(const Var& a) { return a.tape().requires_grad(a.id()); }
inline bool any_grad(const Var& a, const Var& b) { return any_grad(a) || any_grad(b); }

inline std::string shapes(const Tensor& a, const Tensor& b) {
  return Tensor::shape_string(a.shape()) + " and " + Tensor::shape_string(b.shape());
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shapes(a, b));
  }
}

}  // namespace detail

/// a (m x k) * b (k x n).
[[nodiscard]] inline Var matmul(const Var& a, const Var& b) {
  detail::require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: shape mismatch " + detail::shapes(av, bv));
  }
  Tensor out = Tensor::zeros(av.rows(), bv.cols());
  out.matrix().noalias() = av.matrix() * bv.matrix();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), detail::any_grad(a, b), [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.matrix() * t.value(ib).matrix().transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).matrix().transpose() * g.matrix());
  });
}

/// a (m x k) * b^T where b is (n x k).
[[nodiscard]] inline Var matmul_nt(const Var& a, const Var& b) {
  detail::require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("matmul_nt: shape mismatch " + detail::shapes(av, bv));
  }
  Tensor out = Tensor::zeros(av.rows(), bv.rows());
  out.matrix().noalias() = av.matrix() * bv.matrix().transpose();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), detail::any_grad(a, b), [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.matrix() * t.value(ib).matrix());
    if (t.requires_grad(ib)) t.accumulate(ib, g.matrix().transpose() * t.value(ia).matrix());
  });
}

[[nodiscard]] inline Var transpose(const Var& a) {
  const Tensor& av = a.value();
  Tensor out = Tensor::zeros(av.cols(), av.rows());
  out.matrix() = av.matrix().transpose();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), detail::any_grad(a), [ia](Tape& t, const Tensor& g) {
    t.accumulate(ia, g.matrix().transpose());
  });
}

[[nodiscard]] inline Var add(const Var& a, const Var& b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  out.set_requires_grad(false);
  out.matrix() += b.value().matrix();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), detail::any_grad(a, b), [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g.matrix());
    t.accumulate(ib, g.matrix());
  });
}

/// a (m x n) + bias broadcast over rows; bias is 1 x n or rank-1 of length n.
[[nodiscard]] inline Var add_row(const Var& a, const Var& bias) {
  detail::require_same_tape(a, bias);
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_row: shape mismatch " + detail::shapes(av, bv));
  }
  Tensor out = Tensor::zeros(av.rows(), av.cols());
  out.matrix() = av.matrix().rowwise() + bv.matrix().row(0);
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().record(std::move(out), detail::any_grad(a, bias), [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g.matrix());
    if (t.requires_grad(ib)) t.accumulate(ib, g.matrix().colwise().sum());
  });
}

/// Elementwise product.
[[nodiscard]] inline Var mul(const Var& a, const Var& b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape("mul", a.value(), b.value());
  Tensor out = Tensor::zeros(a.value().rows(), a.value().cols());
  out.matrix() = a.value().matrix().cwiseProduct(b.value().matrix());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), detail::any_grad(a, b), [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.matrix().cwiseProduct(t.value(ib).matrix()));
    if (t.requires_grad(ib)) t.accumulate(ib, g.matrix().cwiseProduct(t.value(ia).matrix()));
  });
}

[[nodiscard]] inline Var scale(const Var& a, double s) {
  Tensor out = Tensor::zeros(a.value().rows(), a.value().cols());
  out.matrix() = a.value().matrix() * s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), detail::any_grad(a), [ia, s](Tape& t, const Tensor& g) {
    t.accumulate(ia, g.matrix() * s);
  });
}

[[nodiscard]] inline Var relu(const Var& a) {
  Tensor out = Tensor::zeros(a.value().rows(), a.value().cols());
  out.matrix() = a.value().matrix().cwiseMax(0.0);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), detail::any_grad(a), [ia](Tape& t, const Tensor& g) {
    const auto x = t.value(ia).matrix().array();
    t.accumulate(ia, (x > 0.0).select(g.matrix().array(), 0.0).matrix());
  });
}

/// Row-wise softmax with max subtraction.
[[nodiscard]] inline Var softmax_rows(const Var& a) {
  const Tensor& av = a.value();
  Tensor out = Tensor::zeros(av.rows(), av.cols());
  auto y = out.matrix();
  const auto x = av.matrix();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  const std::size_t ia = a.id();
  // The output is needed in backward; keep a copy rather than a node id.
  Tensor saved = out;
  return a.tape().record(std::move(out), detail::any_grad(a),
                         [ia, saved = std::move(saved)](Tape& t, const Tensor& g) {
                           const auto s = saved.matrix();
                           const auto gy = g.matrix();
                           const Eigen::VectorXd dot = gy.cwiseProduct(s).rowwise().sum();
                           Matrix gx = s.cwiseProduct(gy - dot.replicate(1, gy.cols()));
                           t.accumulate(ia, gx);
                         });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes each row to zero mean and unit variance (biased estimator,
/// eps inside the square root), then applies gain and bias.
[[nodiscard]] inline Var layer_norm(const Var& x, const Var& gain, const Var& bias,
                                    double eps = kLayerNormEps) {
  detail::require_same_tape(x, gain);
  detail::require_same_tape(x, bias);
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(n) + " entries, got " +
                         detail::shapes(gain.value(), bias.value()));
  }
  Matrix xhat(xv.rows(), xv.cols());
  Eigen::VectorXd inv_std(xv.rows());
  const auto xm = xv.matrix();
  for (Eigen::Index i = 0; i < xm.rows(); ++i) {
    const double mu = xm.row(i).mean();
    const double var = (xm.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xm.row(i).array() - mu) * inv_std(i);
  }
  Tensor out = Tensor::zeros(xv.rows(), xv.cols());
  const Eigen::Map<const Eigen::RowVectorXd> g_row(gain.value().data().data(), static_cast<Eigen::Index>(n));
  const Eigen::Map<const Eigen::RowVectorXd> b_row(bias.value().data().data(), static_cast<Eigen::Index>(n));
  out.matrix() = (xhat.array().rowwise() * g_row.array()).rowwise() + b_row.array();

  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  const bool needs = detail::any_grad(x) || detail::any_grad(gain) || detail::any_grad(bias);
  return x.tape().record(
      std::move(out), needs,
      [ix, ig, ib, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        const auto gy = g.matrix();
        const auto& gain_t = t.value(ig);
        const Eigen::Map<const Eigen::RowVectorXd> gvec(gain_t.data().data(), static_cast<Eigen::Index>(n));
        if (t.requires_grad(ib)) {
          const Eigen::RowVectorXd gb = gy.colwise().sum();
          t.accumulate(ib, gb.reshaped<Eigen::RowMajor>(static_cast<Eigen::Index>(t.value(ib).rows()),
                                                        static_cast<Eigen::Index>(t.value(ib).cols())));
        }
        if (t.requires_grad(ig)) {
          const Eigen::RowVectorXd gg = gy.cwiseProduct(xhat).colwise().sum();
          t.accumulate(ig, gg.reshaped<Eigen::RowMajor>(static_cast<Eigen::Index>(gain_t.rows()),
                                                        static_cast<Eigen::Index>(gain_t.cols())));
        }
        if (t.requires_grad(ix)) {
          const Matrix gxhat = gy.array().rowwise() * gvec.array();
          const Eigen::VectorXd mean_g = gxhat.rowwise().mean();
          const Eigen::VectorXd mean_gx = gxhat.cwiseProduct(xhat).rowwise().mean();
          Matrix gx = gxhat;
          gx.colwise() -= mean_g;
          gx.array() -= xhat.array().colwise() * mean_gx.array();
          gx.array().colwise() *= inv_std.array();
          t.accumulate(ix, gx);
        }
      });
}

/// Inverted dropout: in training mode each element is zeroed with
/// probability p and survivors are scaled by 1/(1-p).  Identity otherwise.
[[nodiscard]] inline Var dropout(const Var& a, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return a;
  const Tensor& av = a.value();
  Tensor keep({av.rows(), av.cols()});
  const double s = 1.0 / (1.0 - p);
  for (double& k : keep.data()) k = uniform01(rng) < p ? 0.0 : s;
  Tensor out = Tensor::zeros(av.rows(), av.cols());
  out.matrix() = av.matrix().cwiseProduct(keep.matrix());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), detail::any_grad(a),
                         [ia, keep = std::move(keep)](Tape& t, const Tensor& g) {
                           t.accumulate(ia, g.matrix().cwiseProduct(keep.matrix()));
                         });
}

/// Horizontal concatenation of equal-height matrices.
[[nodiscard]] inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no inputs");
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    detail::require_same_tape(parts.front(), p);
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + detail::shapes(parts.front().value(), p.value()));
    }
    cols += p.value().cols();
    needs = needs || detail::any_grad(p);
  }
  Tensor out = Tensor::zeros(rows, cols);
  std::vector<std::pair<std::size_t, std::size_t>> pieces;  // (id, width)
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    const auto w = static_cast<Eigen::Index>(p.value().cols());
    out.matrix().middleCols(c, w) = p.value().matrix();
    pieces.emplace_back(p.id(), static_cast<std::size_t>(w));
    c += w;
  }
  return parts.front().tape().record(std::move(out), needs,
                                     [pieces = std::move(pieces)](Tape& t, const Tensor& g) {
                                       Eigen::Index off = 0;
                                       for (const auto& [id, w] : pieces) {
                                         const auto width = static_cast<Eigen::Index>(w);
                                         t.accumulate(id, g.matrix().middleCols(off, width));
                                         off += width;
                                       }
                                     });
}

/// Scaled dot-product attention on a stack of equal-length sequences.  q, k
/// and v hold `segments` blocks of `seq_len` rows each; every block attends
/// only within itself, with no causal mask.  Row i of block b is
/// softmax(q_b k_bᵀ * scale)_i · v_b.
[[nodiscard]] inline Var attention(const Var& q, const Var& k, const Var& v, std::size_t seq_len,
                                   double scale) {
  detail::require_same_tape(q, k);
  detail::require_same_tape(q, v);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (seq_len == 0 || qv.rows() % seq_len != 0 || kv.rows() != qv.rows() || vv.rows() != qv.rows() ||
      kv.cols() != qv.cols()) {
    throw DimensionError("attention: incompatible shapes q " + Tensor::shape_string(qv.shape()) + ", k " +
                         Tensor::shape_string(kv.shape()) + ", v " + Tensor::shape_string(vv.shape()) +
                         " for sequence length " + std::to_string(seq_len));
  }
  const auto L = static_cast<Eigen::Index>(seq_len);
  const Eigen::Index blocks = static_cast<Eigen::Index>(qv.rows()) / L;
  Tensor out = Tensor::zeros(qv.rows(), vv.cols());
  std::vector<Matrix> probs(static_cast<std::size_t>(blocks));
  for (Eigen::Index b = 0; b < blocks; ++b) {
    Matrix s = qv.matrix().middleRows(b * L, L) * kv.matrix().middleRows(b * L, L).transpose() * scale;
    for (Eigen::Index i = 0; i < L; ++i) {
      const double m = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - m).exp().matrix();
      s.row(i) /= s.row(i).sum();
    }
    out.matrix().middleRows(b * L, L).noalias() = s * vv.matrix().middleRows(b * L, L);
    probs[static_cast<std::size_t>(b)] = std::move(s);
  }
  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  const bool needs = detail::any_grad(q) || detail::any_grad(k) || detail::any_grad(v);
  return q.tape().record(
      std::move(out), needs, [iq, ik, iv, L, blocks, scale, probs = std::move(probs)](Tape& t, const Tensor& g) {
        const auto Q = t.value(iq).matrix();
        const auto K = t.value(ik).matrix();
        const auto V = t.value(iv).matrix();
        Matrix gq = Matrix::Zero(Q.rows(), Q.cols());
        Matrix gk = Matrix::Zero(K.rows(), K.cols());
        Matrix gv = Matrix::Zero(V.rows(), V.cols());
        for (Eigen::Index b = 0; b < blocks; ++b) {
          const Matrix& P = probs[static_cast<std::size_t>(b)];
          const auto go = g.matrix().middleRows(b * L, L);
          gv.middleRows(b * L, L).noalias() = P.transpose() * go;
          Matrix gp = go * V.middleRows(b * L, L).transpose();
          const Eigen::VectorXd dot = gp.cwiseProduct(P).rowwise().sum();
          gp.colwise() -= dot;
          const Matrix gs = P.cwiseProduct(gp) * scale;
          gq.middleRows(b * L, L).noalias() = gs * K.middleRows(b * L, L);
          gk.middleRows(b * L, L).noalias() = gs.transpose() * Q.middleRows(b * L, L);
        }
        t.accumulate(iq, gq);
        t.accumulate(ik, gk);
        t.accumulate(iv, gv);
      });
}

[[nodiscard]] inline Var sum(const Var& a) {
  Tensor out({1}, a.value().matrix().sum());
  const std::size_t ia = a.id();
  const auto r = static_cast<Eigen::Index>(a.value().rows());
  const auto c = static_cast<Eigen::Index>(a.value().cols());
  return a.tape().record(std::move(out), detail::any_grad(a), [ia, r, c](Tape& t, const Tensor& g) {
    t.accumulate(ia, Matrix::Constant(r, c, g[0]));
  });
}

[[nodiscard]] inline Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update.  Moment buffers are created on first use.
/// `names` (optional) label parameters in error messages.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
                      std::span<const std::string> names = {}) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  auto label = [&](std::size_t i) {
    return i < names.size() ? names[i] : "#" + std::to_string(i);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      throw DimensionError("adam_step: gradient shape " + Tensor::shape_string(grads[i].shape()) +
                           " does not match parameter " + label(i) + " " +
                           Tensor::shape_string(params[i]->shape()));
    }
    if (!grads[i].all_finite()) {
      throw OptimizerError("adam_step: non-finite gradient for parameter " + label(i));
    }
  }
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.push_back(Tensor::zeros_like(*p));
      state.v.push_back(Tensor::zeros_like(*p));
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state/parameter count mismatch");

  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace chronoweft
