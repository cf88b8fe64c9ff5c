#include "mcmt/inference.hpp"

#include "mcmt/checkpoint.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace mcmt {

namespace {

std::vector<std::size_t> score_order(const ProposalSet& proposals) {
  for (const auto& p : proposals) {
    if (!p.score) throw std::invalid_argument("rank_by_attention: proposal without score");
  }
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return *proposals[a].score > *proposals[b].score;
  });
  return order;
}

double score_or_zero(const Proposal& p) { return p.score.value_or(0.0); }

// Vote order: mass desc, score desc, index asc.
std::vector<std::size_t> vote_order(const ProposalSet& proposals,
                                    const std::vector<double>& votes) {
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (votes[a] != votes[b]) return votes[a] > votes[b];
    const double sa = score_or_zero(proposals[a]);
    const double sb = score_or_zero(proposals[b]);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return order;
}

}  // namespace

ProposalSet rank_by_attention(const ProposalSet& proposals) {
  ProposalSet out;
  for (std::size_t i : score_order(proposals)) out.push_back(proposals[i]);
  return out;
}

std::vector<double> vote_mass(const ProposalSet& proposals, VoteMode mode, double tau) {
  std::vector<Moment> spans;
  spans.reserve(proposals.size());
  for (const auto& p : proposals) spans.push_back(proposal_to_moment(p, 1.0));
  std::vector<double> votes(proposals.size(), 0.0);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    for (std::size_t j = 0; j < spans.size(); ++j) {
      if (i == j) continue;
      const double v = iou(spans[i], spans[j]);
      votes[i] += mode == VoteMode::Continuous ? v : (v > tau ? 1.0 : 0.0);
    }
  }
  return votes;
}

std::size_t vote_winner(const ProposalSet& proposals, VoteMode mode, double tau) {
  if (proposals.empty()) throw std::invalid_argument("vote_top1: no proposals");
  return vote_order(proposals, vote_mass(proposals, mode, tau)).front();
}

Proposal vote_top1(const ProposalSet& proposals, VoteMode mode, double tau) {
  return proposals[vote_winner(proposals, mode, tau)];
}

Retrieval retrieve(const Model& model, const Example& example, InferenceStrategy strategy,
                   const TrainConfig* expected) {
  if (expected) check_fingerprint(*expected, model.config.fingerprint());
  ad::Graph g;
  nn::Context ctx(g, false);
  const GeneratorOutput out =
      model.generator.forward(ctx, example.video, example.query, &example.inverse);

  Retrieval r;
  r.proposals = out.proposals();
  if (strategy == InferenceStrategy::Vote) {
    r.votes = vote_mass(r.proposals, model.config.vote_mode, model.config.vote_threshold);
    r.order = vote_order(r.proposals, r.votes);
  } else {
    r.order = score_order(r.proposals);
  }
  for (std::size_t i : r.order) {
    r.ranked.push_back(proposal_to_moment(r.proposals[i], example.video.duration));
  }
  r.top1 = r.ranked.front();
  return r;
}

}  // namespace mcmt
