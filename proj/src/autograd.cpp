#include "mcmt/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mcmt::ad {

const Matrix Graph::kEmpty;

const Matrix& Var::value() const { return graph_->value(id_); }
const Matrix& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::input(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::push(Matrix value, std::initializer_list<Var> parents,
                Backward backward) {
  bool rg = false;
  for (const auto& p : parents) {
    if (p.graph() != this) throw std::logic_error("mixing tapes");
    rg = rg || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), rg,
                        rg ? std::move(backward) : nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Matrix& Graph::grad(int id) const {
  return nodes_[id].grad.size() ? nodes_[id].grad : kEmpty;
}

Matrix& Graph::grad_buffer(int id) {
  auto& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss");
  }
  if (!loss.requires_grad()) return;
  grad_buffer(loss.id())(0, 0) += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    auto& n = nodes_[id];
    if (n.backward && n.grad.size() != 0) n.backward(*this, id);
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

// Accumulates into a parent's gradient only when that parent participates.
template <typename Expr>
void accumulate(Graph& g, const Var& parent, const Expr& e) {
  if (parent.requires_grad()) g.grad_buffer(parent.id()) += e;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ (" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + ")");
  }
  Matrix out = a.value() * b.value();
  return a.graph()->push(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Matrix& gy = g.grad(self);
    if (a.requires_grad()) g.grad_buffer(a.id()).noalias() += gy * b.value().transpose();
    if (b.requires_grad()) g.grad_buffer(b.id()).noalias() += a.value().transpose() * gy;
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return a.graph()->push(a.value() + b.value(), {a, b}, [a, b](Graph& g, int self) {
    accumulate(g, a, g.grad(self));
    accumulate(g, b, g.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return a.graph()->push(a.value() - b.value(), {a, b}, [a, b](Graph& g, int self) {
    accumulate(g, a, g.grad(self));
    accumulate(g, b, -g.grad(self));
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return a.graph()->push(a.value().cwiseProduct(b.value()), {a, b},
                         [a, b](Graph& g, int self) {
                           accumulate(g, a, g.grad(self).cwiseProduct(b.value()));
                           accumulate(g, b, g.grad(self).cwiseProduct(a.value()));
                         });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: row must be 1 x " + std::to_string(a.cols()));
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.graph()->push(std::move(out), {a, row}, [a, row](Graph& g, int self) {
    accumulate(g, a, g.grad(self));
    accumulate(g, row, g.grad(self).colwise().sum());
  });
}

Var scale(const Var& a, double s) {
  return a.graph()->push(a.value() * s, {a}, [a, s](Graph& g, int self) {
    accumulate(g, a, g.grad(self) * s);
  });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return a.graph()->push(std::move(out), {a}, [a](Graph& g, int self) {
    accumulate(g, a, g.grad(self));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  return a.graph()->push(std::move(out), {a}, [a](Graph& g, int self) {
    const auto y = g.value(self).array();
    accumulate(g, a, (g.grad(self).array() * y * (1.0 - y)).matrix());
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.graph()->push(std::move(out), {a}, [a](Graph& g, int self) {
    accumulate(g, a,
               (a.value().array() > 0.0).select(g.grad(self), 0.0).matrix());
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp().matrix();
  return a.graph()->push(std::move(out), {a}, [a](Graph& g, int self) {
    accumulate(g, a, g.grad(self).cwiseProduct(g.value(self)));
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.graph()->push(std::move(out), {a}, [a](Graph& g, int self) {
    if (a.requires_grad()) g.grad_buffer(a.id()).array() += g.grad(self)(0, 0);
  });
}

Var transpose(const Var& a) {
  return a.graph()->push(a.value().transpose(), {a}, [a](Graph& g, int self) {
    accumulate(g, a, g.grad(self).transpose());
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::invalid_argument("slice_rows: range out of bounds");
  }
  return a.graph()->push(a.value().middleRows(start, count), {a},
                         [a, start, count](Graph& g, int self) {
                           if (a.requires_grad())
                             g.grad_buffer(a.id()).middleRows(start, count) += g.grad(self);
                         });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  return a.graph()->push(a.value().middleCols(start, count), {a},
                         [a, start, count](Graph& g, int self) {
                           if (a.requires_grad())
                             g.grad_buffer(a.id()).middleCols(start, count) += g.grad(self);
                         });
}

Var concat_rows(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("concat_rows: column mismatch");
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a.value(), b.value();
  const auto ra = a.rows();
  return a.graph()->push(std::move(out), {a, b}, [a, b, ra](Graph& g, int self) {
    const Matrix& gy = g.grad(self);
    accumulate(g, a, gy.topRows(ra));
    accumulate(g, b, gy.bottomRows(gy.rows() - ra));
  });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const auto ca = a.cols();
  return a.graph()->push(std::move(out), {a, b}, [a, b, ca](Graph& g, int self) {
    const Matrix& gy = g.grad(self);
    accumulate(g, a, gy.leftCols(ca));
    accumulate(g, b, gy.rightCols(gy.cols() - ca));
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    out.row(r).array() -= out.row(r).maxCoeff();
    out.row(r) = out.row(r).array().exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return a.graph()->push(std::move(out), {a}, [a](Graph& g, int self) {
    const Matrix& y = g.value(self);
    const Matrix& gy = g.grad(self);
    const Eigen::VectorXd dots = gy.cwiseProduct(y).rowwise().sum();
    accumulate(g, a,
               (y.array() * (gy.colwise() - dots).array()).matrix());
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw std::invalid_argument("layer_norm: gain/bias must be 1 x d");
  }
  auto xhat = std::make_shared<Matrix>(n, d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mu).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (x.value().row(r).array() - mu) * (*inv_std)(r);
  }
  Matrix out = (xhat->array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return x.graph()->push(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat, inv_std, d](Graph& g, int self) {
        const Matrix& gy = g.grad(self);
        accumulate(g, gain, gy.cwiseProduct(*xhat).colwise().sum());
        accumulate(g, bias, gy.colwise().sum());
        if (!x.requires_grad()) return;
        Matrix dxhat = (gy.array().rowwise() * gain.value().row(0).array()).matrix();
        Matrix& gx = g.grad_buffer(x.id());
        for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
          const double m1 = dxhat.row(r).mean();
          const double m2 = dxhat.row(r).dot(xhat->row(r)) / static_cast<double>(d);
          gx.row(r).array() +=
              (*inv_std)(r) * (dxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
        }
      });
}

namespace {

struct HeadCache {
  Matrix weights;  // renormalized attention weights (n_q x n_k)
  Matrix raw;      // exp(score - row max), zero where disallowed
  Eigen::VectorXd mass;  // per-row normalizer after key weighting
};

}  // namespace

Var attention(const Var& q, const Var& k, const Var& v,
              const std::optional<Var>& key_weights, int heads, bool causal) {
  const Eigen::Index nq = q.rows();
  const Eigen::Index nk = k.rows();
  const Eigen::Index d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != nk) {
    throw std::invalid_argument("attention: q/k/v shape mismatch");
  }
  if (heads <= 0 || d % heads != 0) {
    throw std::invalid_argument("attention: head count must divide width");
  }
  if (key_weights && (key_weights->rows() != 1 || key_weights->cols() != nk)) {
    throw std::invalid_argument("attention: key weights must be 1 x n_keys");
  }
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::RowVectorXd kw =
      key_weights ? Eigen::RowVectorXd(key_weights->value().row(0))
                  : Eigen::RowVectorXd::Ones(nk);

  auto cache = std::make_shared<std::vector<HeadCache>>(heads);
  Matrix out = Matrix::Zero(nq, d);
  for (int h = 0; h < heads; ++h) {
    const Matrix scores =
        q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose() *
        inv_sqrt;
    HeadCache& hc = (*cache)[h];
    hc.weights = Matrix::Zero(nq, nk);
    hc.raw = Matrix::Zero(nq, nk);
    hc.mass = Eigen::VectorXd::Zero(nq);
    for (Eigen::Index i = 0; i < nq; ++i) {
      const Eigen::Index limit = causal ? std::min(i + 1, nk) : nk;
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < limit; ++j) {
        if (kw(j) > 0.0) mx = std::max(mx, scores(i, j));
      }
      if (!std::isfinite(mx)) continue;
      double z = 0.0;
      for (Eigen::Index j = 0; j < limit; ++j) {
        hc.raw(i, j) = std::exp(scores(i, j) - mx);
        z += hc.raw(i, j) * kw(j);
      }
      hc.mass(i) = z;
      if (z > 0.0) {
        for (Eigen::Index j = 0; j < limit; ++j) hc.weights(i, j) = hc.raw(i, j) * kw(j) / z;
      }
    }
    out.middleCols(h * dh, dh).noalias() = hc.weights * v.value().middleCols(h * dh, dh);
  }

  Var kwv = key_weights ? *key_weights : q;  // placeholder parent when absent
  const bool has_kw = key_weights.has_value();
  return q.graph()->push(
      std::move(out), {q, k, v, kwv},
      [q, k, v, kwv, has_kw, heads, dh, inv_sqrt, cache](Graph& g, int self) {
        const Matrix& gy = g.grad(self);
        for (int h = 0; h < heads; ++h) {
          const HeadCache& hc = (*cache)[h];
          const auto gyh = gy.middleCols(h * dh, dh);
          const Matrix dA = gyh * v.value().middleCols(h * dh, dh).transpose();
          if (v.requires_grad())
            g.grad_buffer(v.id()).middleCols(h * dh, dh).noalias() +=
                hc.weights.transpose() * gyh;
          const Eigen::VectorXd r = dA.cwiseProduct(hc.weights).rowwise().sum();
          const Matrix centered = dA.colwise() - r;
          if (q.requires_grad() || k.requires_grad()) {
            const Matrix dS = hc.weights.cwiseProduct(centered) * inv_sqrt;
            if (q.requires_grad())
              g.grad_buffer(q.id()).middleCols(h * dh, dh).noalias() +=
                  dS * k.value().middleCols(h * dh, dh);
            if (k.requires_grad())
              g.grad_buffer(k.id()).middleCols(h * dh, dh).noalias() +=
                  dS.transpose() * q.value().middleCols(h * dh, dh);
          }
          if (has_kw && kwv.requires_grad()) {
            Matrix& gw = g.grad_buffer(kwv.id());
            for (Eigen::Index i = 0; i < hc.raw.rows(); ++i) {
              if (!(hc.mass(i) > 0.0)) continue;
              gw.row(0) += centered.row(i).cwiseProduct(hc.raw.row(i)) / hc.mass(i);
            }
          }
        }
      });
}

Var gaussian_masks(const Var& centers, const Var& widths, int n_v, double alpha,
                   double width_floor) {
  const Eigen::Index k = centers.rows();
  if (centers.cols() != 1 || widths.cols() != 1 || widths.rows() != k) {
    throw std::invalid_argument("gaussian_masks: centers/widths must be k x 1");
  }
  if (n_v <= 0) throw std::invalid_argument("gaussian_masks: n_v must be positive");
  Matrix out(k, n_v);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double c = centers.value()(i, 0);
    const double w = std::max(widths.value()(i, 0), width_floor);
    for (int j = 0; j < n_v; ++j) {
      const double t = static_cast<double>(j + 1) / n_v - c;
      out(i, j) = std::exp(-alpha * t * t / (w * w));
    }
  }
  return centers.graph()->push(
      std::move(out), {centers, widths},
      [centers, widths, n_v, alpha, width_floor](Graph& g, int self) {
        const Matrix& m = g.value(self);
        const Matrix& gy = g.grad(self);
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
          const double c = centers.value()(i, 0);
          const double raw_w = widths.value()(i, 0);
          const double w = std::max(raw_w, width_floor);
          double dc = 0.0;
          double dw = 0.0;
          for (int j = 0; j < n_v; ++j) {
            const double t = static_cast<double>(j + 1) / n_v - c;
            const double gm = gy(i, j) * m(i, j);
            dc += gm * 2.0 * alpha * t / (w * w);
            dw += gm * 2.0 * alpha * t * t / (w * w * w);
          }
          if (centers.requires_grad()) g.grad_buffer(centers.id())(i, 0) += dc;
          if (widths.requires_grad() && raw_w > width_floor)
            g.grad_buffer(widths.id())(i, 0) += dw;
        }
      });
}

Var cross_entropy_sum(const Var& logits, std::span<const int> targets,
                      Eigen::Index count, double prob_floor) {
  if (count < 0 || count > logits.rows() ||
      static_cast<Eigen::Index>(targets.size()) < count) {
    throw std::invalid_argument("cross_entropy_sum: target count out of range");
  }
  auto probs = std::make_shared<Matrix>(count, logits.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < count; ++i) {
    const int t = targets[i];
    if (t < 0 || t >= logits.cols()) {
      throw std::invalid_argument("cross_entropy_sum: target id out of range");
    }
    auto row = probs->row(i);
    row = logits.value().row(i);
    if (!row.allFinite()) {
      throw std::runtime_error("cross_entropy_sum: non-finite logits at position " +
                               std::to_string(i));
    }
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
    loss -= std::log(std::max(row(t), prob_floor));
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  std::vector<int> tgt(targets.begin(), targets.begin() + count);
  return logits.graph()->push(
      std::move(out), {logits},
      [logits, probs, tgt = std::move(tgt), prob_floor](Graph& g, int self) {
        const double s = g.grad(self)(0, 0);
        Matrix& gl = g.grad_buffer(logits.id());
        for (Eigen::Index i = 0; i < probs->rows(); ++i) {
          const int t = tgt[i];
          if ((*probs)(i, t) < prob_floor) continue;
          gl.row(i) += s * probs->row(i);
          gl(i, t) -= s;
        }
      });
}

}  // namespace mcmt::ad
