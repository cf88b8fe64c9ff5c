#pragma once

#include "mcmt/config.hpp"
#include "mcmt/core_types.hpp"
#include "mcmt/dataio.hpp"
#include "mcmt/nn.hpp"

#include <optional>
#include <random>
#include <span>
#include <vector>

namespace mcmt {

using MaskMatrix = Eigen::MatrixXd;  // k x n_v

/// Differentiable outputs of one generator pass. All handles live on the
/// graph of the Context passed to MaskGenerator::forward.
struct GeneratorOutput {
  ad::Var fused_forward;   // n_v x d_h
  ad::Var fused_inverse;   // n_v x d_h (aliases fused_forward when MT is off)
  ad::Var centers;         // k x 1
  ad::Var widths;          // k x 1, already scaled by width_cap
  std::optional<ad::Var> fusion_weights;  // 1 x 2, attention fusion only
  ad::Var masks;           // k x n_v
  ad::Var aggregation;     // 1 x k, softmax over masks
  ad::Var positive;        // 1 x n_v
  ad::Var easy;            // 1 x n_v
  ad::Var hard;            // 1 x n_v

  /// Proposals with their aggregation weights as scores.
  ProposalSet proposals() const;
};

/// Query encoder + video decoder that fuses both modalities, followed by the
/// proposal head and the mask aggregation weights.
class MaskGenerator {
 public:
  MaskGenerator(const TrainConfig& config, std::mt19937_64& rng);

  const TrainConfig& config() const { return config_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  /// Cross-modal fusion: decoder over projected clips attending to the
  /// encoded query. Returns n_v x d_h.
  ad::Var fuse(nn::Context& ctx, const ClipFeatureSequence& video,
               const TokenizedQuery& query) const;

  /// Concatenation head: sigmoid([h_f | h_i] W_p + b_p). Returns (c, w) as
  /// k x 1 columns with widths scaled by width_cap.
  std::pair<ad::Var, ad::Var> predict_concat(nn::Context& ctx, const ad::Var& h_f,
                                             const ad::Var& h_i) const;

  /// Additive-attention head. Also returns the 1 x 2 fusion weights.
  std::tuple<ad::Var, ad::Var, ad::Var> predict_attention(nn::Context& ctx,
                                                          const ad::Var& h_f,
                                                          const ad::Var& h_i) const;

  /// Softmax over per-mask scores W_m . row_i, then the weighted sum of rows.
  /// Returns (positive 1 x n_v, weights 1 x k).
  std::pair<ad::Var, ad::Var> aggregate(nn::Context& ctx, const ad::Var& masks) const;

  /// Full pass. `inverse` is ignored when MT is disabled.
  GeneratorOutput forward(nn::Context& ctx, const ClipFeatureSequence& video,
                          const TokenizedQuery& query,
                          const TokenizedQuery* inverse) const;

  // Eval-mode conveniences operating on plain values.
  ProposalSet predict_proposals_concat(const Eigen::RowVectorXd& h_f,
                                       const Eigen::RowVectorXd& h_i) const;
  ProposalSet predict_proposals_attn(const Eigen::RowVectorXd& h_f,
                                     const Eigen::RowVectorXd& h_i,
                                     Eigen::RowVector2d* fusion_weights = nullptr) const;
  std::pair<std::vector<double>, std::vector<double>> aggregate_masks(
      const MaskMatrix& masks) const;

 private:
  TrainConfig config_;
  int k_;
  nn::ParameterStore params_;
  nn::Linear query_in_, video_in_;
  nn::Parameter* query_pos_ = nullptr;
  nn::Parameter* video_pos_ = nullptr;
  std::vector<nn::EncoderLayer> encoder_;
  std::vector<nn::DecoderLayer> decoder_;
  nn::Linear fusion_score_;  // W_h, attention mode only
  nn::Linear proposal_;      // W_p with bias
  nn::Parameter* mask_score_ = nullptr;  // W_m as n_v x 1
};

/// k x n_v matrix m_ij = exp(-alpha((j+1)/n_v - c_i)^2 / w_i^2). Widths below
/// `width_floor` are clamped up; a zero width is rejected.
MaskMatrix build_gaussian_masks(const ProposalSet& proposals, int n_v, double alpha,
                                double width_floor = 1e-3);

/// Easy negative = 1 - positive, hard negative = all ones.
MaskTriplet mine_negatives(std::span<const double> positive);

/// 1 x n mask of ones for the first `valid` positions.
Eigen::MatrixXd padding_weights(int n, int valid);

}  // namespace mcmt
