#pragma once

// Minimal tape-based reverse-mode differentiation over dense double matrices.
//
// A Graph owns every intermediate value created while evaluating a model.
// Nodes are appended in evaluation order, so walking the tape backwards is a
// valid topological order. Sequences are stored one position per row.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace mcmt::ad {

using Matrix = Eigen::MatrixXd;

class Graph;

/// Handle to a node on a Graph tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  bool requires_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(Matrix value, bool requires_grad = false);
  Var constant(Matrix value) { return input(std::move(value), false); }

  // Appends a node. `backward` is dropped when no parent requires a gradient.
  Var push(Matrix value, std::initializer_list<Var> parents, Backward backward);

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
  void backward(const Var& loss);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // Gradient accumulator for `id`, zero-initialized on first use.
  Matrix& grad_buffer(int id);
  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  static const Matrix kEmpty;
};

// -- elementwise and structural ops ------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// Adds a 1 x cols row vector to every row of `a`.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var sum(const Var& a);
Var transpose(const Var& a);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_rows(const Var& a, const Var& b);
Var concat_cols(const Var& a, const Var& b);
Var softmax_rows(const Var& a);

/// Per-row layer normalization with learned gain and bias (both 1 x d).
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

/// Multi-head scaled dot-product attention over pre-projected q, k, v.
///
/// When `key_weights` (1 x n_keys) is given, post-softmax weights toward key
/// j are multiplied by key_weights[j] and renormalized per query row. Rows
/// whose weighted mass vanishes produce zero output. `causal` restricts query
/// i to keys j <= i. Gradients flow into q, k, v and key_weights.
Var attention(const Var& q, const Var& k, const Var& v,
              const std::optional<Var>& key_weights, int heads, bool causal);

/// k x n_v Gaussian masks exp(-alpha((j+1)/n_v - c_i)^2 / w_i^2) for column
/// vectors c, w (k x 1). Widths are clamped below at `width_floor`.
Var gaussian_masks(const Var& centers, const Var& widths, int n_v, double alpha,
                   double width_floor);

/// Sum over the first `count` rows of -log max(softmax(logits_i)[target_i],
/// floor).
Var cross_entropy_sum(const Var& logits, std::span<const int> targets,
                      Eigen::Index count, double prob_floor = 1e-12);

}  // namespace mcmt::ad
