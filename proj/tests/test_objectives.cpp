#include "doctest.h"
#include "mcmt/objectives.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

using namespace mcmt;

namespace {

MaskedQuery target(std::vector<int> ids, int valid) {
  MaskedQuery q;
  q.target_ids = ids;
  q.ids = std::move(ids);
  q.valid_len = valid;
  return q;
}

}  // namespace

TEST_CASE("reconstruction_ce") {
  const auto q = target({3, 1, 4, 1, 0, 0}, 4);
  Eigen::MatrixXd exact = Eigen::MatrixXd::Zero(6, 100);
  for (int i = 0; i < 6; ++i) exact(i, q.target_ids[i]) = 1.0;
  CHECK(reconstruction_ce(exact, q) == 0.0);

  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(6, 100, 0.01);
  CHECK(reconstruction_ce(uniform, q) == doctest::Approx(4 * std::log(100.0)));
  CHECK(reconstruction_ce(uniform, q) == doctest::Approx(18.4207).epsilon(1e-5));

  // Padded rows never contribute, whatever they hold.
  Eigen::MatrixXd junk = uniform;
  junk.row(5).setZero();
  CHECK(reconstruction_ce(junk, q) == reconstruction_ce(uniform, q));

  // Zero probability is clamped.
  Eigen::MatrixXd zero = exact;
  zero(0, 3) = 0.0;
  zero(0, 0) = 1.0;
  CHECK(reconstruction_ce(zero, q) == doctest::Approx(-std::log(1e-12)));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Eigen::MatrixXd d(6, 100);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = u(rng);
    for (int r = 0; r < 6; ++r) d.row(r) /= d.row(r).sum();
    CHECK(reconstruction_ce(d, q) >= 0.0);
  }
}

TEST_CASE("rec_loss composition") {
  LossBundle b;
  b.ce_f_pos = b.ce_i_pos = b.ce_f_hard = b.ce_i_hard = 1.0;
  CHECK(rec_loss(b) == 4.0);
  b.ce_f_easy = 123.0;
  b.ce_i_easy = 0.5;
  CHECK(rec_loss(b) == 4.0);
  CHECK(rec_loss_forward_only(b) == 2.0);
  b.ce_i_hard = -0.1;
  CHECK_THROWS_AS(rec_loss(b), std::invalid_argument);
}

TEST_CASE("ivc hinges") {
  CHECK(ivc_forward(1.0, 1.5, 2.0, 0.1, 0.15) == 0.0);
  CHECK(ivc_forward(1.0, 1.0, 1.0, 0.1, 0.15) == doctest::Approx(0.25));
  CHECK(ivc_forward(2.0, 1.0, 1.5, 0.1, 0.15) == doctest::Approx(1.75));
  CHECK(ivc_inverse(1.0, 1.5, 2.0, 0.1, 0.15) == 0.0);
  CHECK(ivc_inverse(1.0, 1.0, 1.0, 0.1, 0.15) == doctest::Approx(0.25));
  CHECK_THROWS_AS(ivc_forward(1, 1, 1, 0.2, 0.15), std::invalid_argument);
  CHECK_THROWS_AS(ivc_inverse(1, 1, 1, 0.15, 0.15), std::invalid_argument);
  CHECK(ivc_total(0, 0) == 0.0);
  CHECK(ivc_total(0.25, 0.5) == 0.75);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int t = 0; t < 1000; ++t) {
    const double p = u(rng), h = u(rng), e = u(rng);
    const double f = ivc_forward(p, h, e, 0.1, 0.15);
    CHECK(f >= 0.0);
    CHECK(ivc_inverse(p, h, e, 0.1, 0.15) >= 0.0);
    const bool ordered = p + 0.15 <= e && p + 0.1 <= h;
    CHECK((f == 0.0) == ordered);
    const double g = ivc_inverse(h, e, p, 0.1, 0.15);
    CHECK(ivc_total(f, g) >= std::max(f, g));
  }
}

TEST_CASE("differentiable hinges agree with the scalar form") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int t = 0; t < 200; ++t) {
    const double p = u(rng), h = u(rng), e = u(rng);
    ad::Graph g;
    const auto vp = g.input(Eigen::MatrixXd::Constant(1, 1, p), true);
    const auto vh = g.input(Eigen::MatrixXd::Constant(1, 1, h), true);
    const auto ve = g.input(Eigen::MatrixXd::Constant(1, 1, e), true);
    const auto loss = ivc_hinges(vp, vh, ve, 0.1, 0.15);
    CHECK(loss.scalar() == doctest::Approx(ivc_forward(p, h, e, 0.1, 0.15)));
    // Skip points near a kink.
    if (std::abs(p - h + 0.1) < 1e-3 || std::abs(p - e + 0.15) < 1e-3) continue;
    g.backward(loss);
    const double active = (p - h + 0.1 > 0) + (p - e + 0.15 > 0);
    const double step = 1e-6;
    const double fd = (ivc_forward(p + step, h, e, 0.1, 0.15) - ivc_forward(p - step, h, e, 0.1, 0.15)) / (2 * step);
    CHECK(vp.grad()(0, 0) == doctest::Approx(active));
    CHECK(fd == doctest::Approx(active).epsilon(1e-6));
  }
}
