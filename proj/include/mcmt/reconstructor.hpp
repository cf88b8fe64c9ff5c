#pragma once

#include "mcmt/config.hpp"
#include "mcmt/dataio.hpp"
#include "mcmt/nn.hpp"

#include <random>
#include <vector>

namespace mcmt {

enum class QueryDirection { Forward, Inverse };

struct MaskedQuery {
  std::vector<int> ids;          // MASK id at masked positions
  std::vector<int> target_ids;   // original ids
  std::vector<int> masked_positions;
  int valid_len = 0;
  QueryDirection direction = QueryDirection::Forward;
  FeatureMatrix embeddings;      // rows of the unmasked query; masked rows are replaced
};

/// Valid tokens in reverse order, padding left at the tail.
TokenizedQuery reverse_query(const TokenizedQuery& query);

/// Replaces ceil(valid_len / 3) distinct valid positions by the MASK token.
/// Content words are drawn with weight `content_weight`, others with 1.
MaskedQuery mask_query(const TokenizedQuery& query, std::mt19937_64& rng,
                       double content_weight = 3.0,
                       QueryDirection direction = QueryDirection::Forward);

inline int masked_count(int valid_len) { return (valid_len + 2) / 3; }

/// Mask-conditioned transformer that reconstructs a masked query from the
/// clips highlighted by a temporal mask. Shared by both query directions.
class Reconstructor {
 public:
  Reconstructor(const TrainConfig& config, std::mt19937_64& rng);

  const TrainConfig& config() const { return config_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  /// Self-attention encoder over clips whose attention toward clip j is
  /// scaled by mask[j] and renormalized. `mask` is 1 x n_v.
  ad::Var encode(nn::Context& ctx, const ad::Var& video, const ad::Var& mask) const;

  /// Causal decoder over the masked query with mask-conditioned
  /// cross-attention to `encoded`. Returns n_q x d hidden states.
  ad::Var decode(nn::Context& ctx, const MaskedQuery& query, const ad::Var& encoded,
                 const ad::Var& mask) const;

  /// n_q x N_q vocabulary logits.
  ad::Var logits(nn::Context& ctx, const ad::Var& hidden) const;

  /// Summed cross-entropy of `query` given `mask` (encode + decode + CE).
  ad::Var reconstruction_loss(nn::Context& ctx, const ad::Var& encoded, const ad::Var& mask,
                              const MaskedQuery& query) const;

 private:
  TrainConfig config_;
  nn::ParameterStore params_;
  nn::Linear video_in_, word_in_, vocab_out_;
  nn::Parameter* video_pos_ = nullptr;
  nn::Parameter* word_pos_ = nullptr;
  nn::Parameter* mask_embedding_ = nullptr;
  std::vector<nn::EncoderLayer> encoder_;
  std::vector<nn::DecoderLayer> decoder_;
  nn::LayerNorm final_norm_;
};

/// Row-wise softmax of n_q x N_q logits: row i is the distribution of word i.
Eigen::MatrixXd word_distribution(const Eigen::MatrixXd& logits);

}  // namespace mcmt
