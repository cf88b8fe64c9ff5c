#include "doctest.h"
#include "mcmt/autograd.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

using namespace mcmt::ad;

namespace {

using Fn = std::function<Var(Graph&, const std::vector<Var>&)>;

Matrix randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double eval(const Fn& f, const std::vector<Matrix>& xs) {
  Graph g;
  std::vector<Var> vs;
  for (const auto& x : xs) vs.push_back(g.input(x, false));
  return f(g, vs).scalar();
}

// Largest relative error between backprop and central differences.
double gradcheck(const Fn& f, std::vector<Matrix> xs, double h = 1e-6) {
  Graph g;
  std::vector<Var> vs;
  for (const auto& x : xs) vs.push_back(g.input(x, true));
  g.backward(f(g, vs));
  double worst = 0.0;
  for (std::size_t a = 0; a < xs.size(); ++a) {
    const Matrix analytic = g.has_grad(vs[a].id()) ? vs[a].grad()
                                                    : Matrix::Zero(xs[a].rows(), xs[a].cols());
    for (Eigen::Index i = 0; i < xs[a].size(); ++i) {
      const double keep = xs[a].data()[i];
      xs[a].data()[i] = keep + h;
      const double up = eval(f, xs);
      xs[a].data()[i] = keep - h;
      const double down = eval(f, xs);
      xs[a].data()[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(numeric - analytic.data()[i]) /
                         std::max(1.0, std::abs(numeric) + std::abs(analytic.data()[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Contract an arbitrary output against fixed random weights.
Var contract(Graph& g, const Var& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, g.constant(randn(y.rows(), y.cols(), rng))));
}

}  // namespace

TEST_CASE("elementwise and structural ops match finite differences") {
  std::mt19937_64 rng(1);
  const Matrix a = randn(3, 4, rng), b = randn(3, 4, rng), c = randn(4, 2, rng);
  const Matrix row = randn(1, 4, rng);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, matmul(v[0], v[1])); }, {a, c}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, add(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, sub(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, mul(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, add_row(v[0], v[1])); }, {a, row}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, scale(v[0], -2.5)); }, {a}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, add_scalar(v[0], 0.7)); }, {a}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, sigmoid(v[0])); }, {a}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, exp(v[0])); }, {a}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, transpose(v[0])); }, {a}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, slice_rows(v[0], 1, 2)); }, {a}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, slice_cols(v[0], 1, 2)); }, {a}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, concat_rows(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, concat_cols(v[0], v[1])); }, {a, b}) < 1e-7);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, softmax_rows(v[0])); }, {a}) < 1e-7);
  CHECK(gradcheck([](Graph&, auto& v) { return sum(v[0]); }, {a}) < 1e-7);
}

TEST_CASE("relu gradient away from the kink") {
  Matrix a(2, 3);
  a << 0.5, -0.3, 1.2, -2.0, 0.8, -0.1;
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, relu(v[0])); }, {a}) < 1e-7);
}

TEST_CASE("layer_norm gradient") {
  std::mt19937_64 rng(2);
  const Matrix x = randn(4, 6, rng), gain = randn(1, 6, rng), bias = randn(1, 6, rng);
  CHECK(gradcheck([](Graph& g, auto& v) { return contract(g, layer_norm(v[0], v[1], v[2])); },
                  {x, gain, bias}) < 1e-6);
}

TEST_CASE("attention gradient with key weights, heads and causality") {
  std::mt19937_64 rng(3);
  const Matrix q = randn(5, 8, rng), k = randn(6, 8, rng), v = randn(6, 8, rng);
  Matrix w(1, 6);
  w << 0.9, 0.2, 0.6, 1.0, 0.35, 0.75;
  CHECK(gradcheck([](Graph& g, auto& x) { return contract(g, attention(x[0], x[1], x[2], x[3], 2, false)); },
                  {q, k, v, w}) < 1e-6);
  const Matrix k5 = randn(5, 8, rng), v5 = randn(5, 8, rng);
  CHECK(gradcheck([](Graph& g, auto& x) { return contract(g, attention(x[0], x[1], x[2], std::nullopt, 4, true)); },
                  {q, k5, v5}) < 1e-6);
}

TEST_CASE("attention honors zero key weights and causality exactly") {
  std::mt19937_64 rng(4);
  Graph g;
  Matrix kw = Matrix::Ones(1, 4);
  kw(0, 2) = 0.0;
  const Matrix q = randn(3, 4, rng), k = randn(4, 4, rng), v = randn(4, 4, rng);
  Matrix v2 = v;
  v2.row(2).array() += 1.0;
  Matrix k2 = k;
  k2.row(2).array() -= 1.0;
  const auto out1 = attention(g.constant(q), g.constant(k), g.constant(v), g.constant(kw), 2, false);
  const auto out2 = attention(g.constant(q), g.constant(k2), g.constant(v2), g.constant(kw), 2, false);
  CHECK((out1.value() - out2.value()).cwiseAbs().maxCoeff() == 0.0);

  // Uniform key weights cancel under renormalization.
  const auto plain = attention(g.constant(q), g.constant(k), g.constant(v), std::nullopt, 2, false);
  const auto half = attention(g.constant(q), g.constant(k), g.constant(v),
                              g.constant(Matrix::Constant(1, 4, 0.5)), 2, false);
  CHECK((plain.value() - half.value()).cwiseAbs().maxCoeff() < 1e-12);

  // A fully masked key set produces zero rows.
  const auto none = attention(g.constant(q), g.constant(k), g.constant(v),
                              g.constant(Matrix::Zero(1, 4)), 2, false);
  CHECK(none.value().cwiseAbs().maxCoeff() == 0.0);

  // Causal: row i ignores keys after i.
  const Matrix qs = randn(4, 4, rng);
  const auto c1 = attention(g.constant(qs), g.constant(k), g.constant(v), std::nullopt, 2, true);
  Matrix v3 = v;
  v3.row(3).array() += 5.0;
  const auto c2 = attention(g.constant(qs), g.constant(k), g.constant(v3), std::nullopt, 2, true);
  CHECK((c1.value().topRows(3) - c2.value().topRows(3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((c1.value().row(3) - c2.value().row(3)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("gaussian_masks gradient and value") {
  Matrix c(2, 1), w(2, 1);
  c << 0.3, 0.7;
  w << 0.25, 0.4;
  CHECK(gradcheck([](Graph& g, auto& x) { return contract(g, gaussian_masks(x[0], x[1], 6, 5.0, 1e-3)); },
                  {c, w}) < 1e-7);
  Graph g;
  const auto m = gaussian_masks(g.constant(c), g.constant(w), 6, 5.0, 1e-3);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 6; ++j) {
      const double d = (j + 1) / 6.0 - c(i, 0);
      CHECK(m.value()(i, j) == doctest::Approx(std::exp(-5.0 * d * d / (w(i, 0) * w(i, 0)))).epsilon(1e-14));
    }
  }
}

TEST_CASE("cross_entropy_sum gradient and clamp") {
  std::mt19937_64 rng(6);
  const Matrix logits = randn(4, 7, rng);
  const std::vector<int> targets = {3, 0, 6, 2};
  CHECK(gradcheck([&](Graph&, auto& x) { return cross_entropy_sum(x[0], targets, 3); }, {logits}) < 1e-7);

  Graph g;
  Matrix extreme = Matrix::Zero(1, 3);
  extreme(0, 0) = 1e4;
  const std::vector<int> t = {1};
  const double ce = cross_entropy_sum(g.constant(extreme), t, 1).scalar();
  CHECK(ce == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937_64 rng(7);
  Graph g;
  const auto s = softmax_rows(g.constant(randn(5, 9, rng, 10.0)));
  for (int i = 0; i < 5; ++i) CHECK(std::abs(s.value().row(i).sum() - 1.0) < 1e-12);
}

TEST_CASE("backward requires a scalar") {
  Graph g;
  const auto x = g.input(Matrix::Ones(2, 2), true);
  CHECK_THROWS(g.backward(x));
}
