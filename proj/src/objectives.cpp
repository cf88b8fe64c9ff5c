#include "mcmt/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mcmt {

double reconstruction_ce(const Eigen::MatrixXd& dist, const MaskedQuery& target) {
  if (dist.rows() < target.valid_len) {
    throw std::invalid_argument("reconstruction_ce: distribution shorter than query");
  }
  double loss = 0.0;
  for (int i = 0; i < target.valid_len; ++i) {
    const int t = target.target_ids[static_cast<std::size_t>(i)];
    if (t < 0 || t >= dist.cols()) throw std::invalid_argument("reconstruction_ce: bad target id");
    loss -= std::log(std::max(dist(i, t), kProbabilityFloor));
  }
  return loss;
}

namespace {

void require_non_negative(double v, const char* name) {
  if (!(v >= 0.0)) {
    throw std::invalid_argument(std::string("loss term ") + name + " is negative or NaN");
  }
}

void require_margins(double lo, double hi, const char* lo_name, const char* hi_name) {
  if (!(lo < hi)) {
    throw std::invalid_argument(std::string("margin ") + lo_name + " must be smaller than " +
                                hi_name);
  }
}

double hinge_pair(double ce_p, double ce_h, double ce_e, double m_h, double m_e) {
  return std::max(ce_p - ce_h + m_h, 0.0) + std::max(ce_p - ce_e + m_e, 0.0);
}

}  // namespace

double rec_loss(const LossBundle& b) {
  require_non_negative(b.ce_f_pos, "ce_f_pos");
  require_non_negative(b.ce_i_pos, "ce_i_pos");
  require_non_negative(b.ce_f_hard, "ce_f_hard");
  require_non_negative(b.ce_i_hard, "ce_i_hard");
  return b.ce_f_pos + b.ce_i_pos + b.ce_f_hard + b.ce_i_hard;
}

double rec_loss_forward_only(const LossBundle& b) {
  require_non_negative(b.ce_f_pos, "ce_f_pos");
  require_non_negative(b.ce_f_hard, "ce_f_hard");
  return b.ce_f_pos + b.ce_f_hard;
}

double ivc_forward(double ce_p, double ce_h, double ce_e, double beta1, double beta2) {
  require_margins(beta1, beta2, "beta1", "beta2");
  return hinge_pair(ce_p, ce_h, ce_e, beta1, beta2);
}

double ivc_inverse(double ce_p, double ce_h, double ce_e, double beta3, double beta4) {
  require_margins(beta3, beta4, "beta3", "beta4");
  return hinge_pair(ce_p, ce_h, ce_e, beta3, beta4);
}

double ivc_total(double l_f, double l_i) { return l_f + l_i; }

ad::Var ivc_hinges(const ad::Var& ce_p, const ad::Var& ce_h, const ad::Var& ce_e,
                   double margin_hard, double margin_easy) {
  require_margins(margin_hard, margin_easy, "hard margin", "easy margin");
  ad::Var a = ad::relu(ad::add_scalar(ad::sub(ce_p, ce_h), margin_hard));
  ad::Var b = ad::relu(ad::add_scalar(ad::sub(ce_p, ce_e), margin_easy));
  return ad::add(a, b);
}

}  // namespace mcmt
