#pragma once

#include "mcmt/config.hpp"
#include "mcmt/core_types.hpp"
#include "mcmt/model.hpp"

#include <optional>
#include <vector>

namespace mcmt {

/// Proposals sorted by descending score; equal scores keep their input order.
/// Throws std::invalid_argument when any proposal lacks a score.
ProposalSet rank_by_attention(const ProposalSet& proposals);

/// Vote mass of each proposal: summed IoU with every other proposal over the
/// clamped [0,1] intervals. Threshold mode counts one vote per IoU > tau.
std::vector<double> vote_mass(const ProposalSet& proposals,
                              VoteMode mode = VoteMode::Continuous, double tau = 0.5);

/// Index of the proposal with the largest vote mass; ties go to the higher
/// score, then to the lower index.
std::size_t vote_winner(const ProposalSet& proposals, VoteMode mode = VoteMode::Continuous,
                        double tau = 0.5);

Proposal vote_top1(const ProposalSet& proposals, VoteMode mode = VoteMode::Continuous,
                   double tau = 0.5);

struct Retrieval {
  Moment top1;
  std::vector<Moment> ranked;  // best first
  ProposalSet proposals;       // generator order, scores = aggregation weights
  std::vector<std::size_t> order;
  std::vector<double> votes;   // empty for the attention-score strategy
};

/// Runs the generator in eval mode and picks the top-1 proposal.
/// `expected`, when given, must describe the model's architecture.
Retrieval retrieve(const Model& model, const Example& example, InferenceStrategy strategy,
                   const TrainConfig* expected = nullptr);

}  // namespace mcmt
