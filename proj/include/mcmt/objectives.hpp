#pragma once

#include "mcmt/autograd.hpp"
#include "mcmt/reconstructor.hpp"

#include <Eigen/Dense>

namespace mcmt {

inline constexpr double kProbabilityFloor = 1e-12;

/// Reconstruction cross-entropies (forward f / inverse i, positive / hard /
/// easy mask) and the losses assembled from them.
struct LossBundle {
  double ce_f_pos = 0.0, ce_i_pos = 0.0;
  double ce_f_hard = 0.0, ce_i_hard = 0.0;
  double ce_f_easy = 0.0, ce_i_easy = 0.0;
  double l_rec = 0.0;
  double l_ivc_f = 0.0, l_ivc_i = 0.0, l_ivc = 0.0;
  int rec_terms = 0;  // number of CE terms summed into l_rec
};

/// -sum over valid positions of log max(dist(i, target_i), 1e-12).
/// `dist` is n_q x N_q with rows summing to one.
double reconstruction_ce(const Eigen::MatrixXd& dist, const MaskedQuery& target);

/// ce_f_pos + ce_i_pos + ce_f_hard + ce_i_hard. Easy terms never enter.
double rec_loss(const LossBundle& b);

/// Forward-only variant used when the inverse stream is disabled.
double rec_loss_forward_only(const LossBundle& b);

/// max(ce_p - ce_h + margin_hard, 0) + max(ce_p - ce_e + margin_easy, 0).
/// Requires margin_hard < margin_easy.
double ivc_forward(double ce_p, double ce_h, double ce_e, double beta1, double beta2);
double ivc_inverse(double ce_p, double ce_h, double ce_e, double beta3, double beta4);
double ivc_total(double l_f, double l_i);

/// Differentiable hinge pair with the same definition as ivc_forward.
ad::Var ivc_hinges(const ad::Var& ce_p, const ad::Var& ce_h, const ad::Var& ce_e,
                   double margin_hard, double margin_easy);

}  // namespace mcmt
