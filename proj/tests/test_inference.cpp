#include "doctest.h"
#include "mcmt/inference.hpp"
#include "support.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace mcmt;

namespace {

Proposal interval(double s, double e, std::optional<double> score = std::nullopt) {
  return Proposal{(s + e) / 2.0, e - s, score};
}

// Independent pairwise overlap on raw [s,e] pairs, clamped to [0,1].
double overlap_ratio(double s1, double e1, double s2, double e2) {
  s1 = std::clamp(s1, 0.0, 1.0);
  e1 = std::clamp(e1, 0.0, 1.0);
  s2 = std::clamp(s2, 0.0, 1.0);
  e2 = std::clamp(e2, 0.0, 1.0);
  const double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  const double uni = std::max(e1, e2) - std::min(s1, s2);
  return uni > 0.0 ? inter / uni : (s1 == s2 && e1 == e2 ? 1.0 : 0.0);
}

}  // namespace

TEST_CASE("worked vote example: the middle interval wins") {
  const ProposalSet ps = {interval(0.4, 0.6), interval(0.45, 0.65), interval(0.5, 0.7)};
  const auto v = vote_mass(ps);
  REQUIRE(v.size() == 3);
  CHECK(v[0] == doctest::Approx(0.6 + 1.0 / 3.0).epsilon(1e-12));
  CHECK(v[1] == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(v[2] == doctest::Approx(0.6 + 1.0 / 3.0).epsilon(1e-12));
  CHECK(vote_winner(ps) == 1);
  CHECK(vote_top1(ps).center == doctest::Approx(0.55));
}

TEST_CASE("vote ties fall to the higher score, then the lower index") {
  const ProposalSet tie_scores = {interval(0.1, 0.3, 0.2), interval(0.6, 0.8, 0.5)};
  CHECK(vote_winner(tie_scores) == 1);
  const ProposalSet same = {interval(0.2, 0.4, 0.5), interval(0.2, 0.4, 0.5),
                            interval(0.2, 0.4, 0.5)};
  CHECK(vote_winner(same) == 0);
  const ProposalSet unscored = {interval(0.1, 0.2), interval(0.5, 0.6)};
  CHECK(vote_winner(unscored) == 0);
}

TEST_CASE("threshold voting counts overlaps above tau") {
  const ProposalSet ps = {interval(0.4, 0.6), interval(0.45, 0.65), interval(0.5, 0.7)};
  const auto v = vote_mass(ps, VoteMode::Threshold, 0.5);
  CHECK(v == std::vector<double>{1.0, 2.0, 1.0});
  const auto strict = vote_mass(ps, VoteMode::Threshold, 0.65);
  CHECK(strict == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("vote mass clamps intervals to the unit range") {
  // [-0.2,0.2] clamps to [0,0.2]; [0,0.2] is then identical.
  const ProposalSet ps = {interval(-0.2, 0.2), interval(0.0, 0.2)};
  const auto v = vote_mass(ps);
  CHECK(v[0] == doctest::Approx(1.0));
  CHECK(v[1] == doctest::Approx(1.0));
}

TEST_CASE("vote winner matches a brute-force argmax on random sets") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatches = 0;
  for (int k = 1; k <= 6; ++k) {
    for (int trial = 0; trial < 200; ++trial) {
      ProposalSet ps;
      for (int i = 0; i < k; ++i) ps.push_back(Proposal{u(rng), 0.01 + 0.99 * u(rng), u(rng)});
      std::size_t best = 0;
      double best_v = -1.0, best_s = -1.0;
      for (int i = 0; i < k; ++i) {
        double v = 0.0;
        for (int j = 0; j < k; ++j) {
          if (i == j) continue;
          v += overlap_ratio(ps[i].center - ps[i].width / 2, ps[i].center + ps[i].width / 2,
                             ps[j].center - ps[j].width / 2, ps[j].center + ps[j].width / 2);
        }
        if (v > best_v || (v == best_v && *ps[i].score > best_s)) {
          best = static_cast<std::size_t>(i);
          best_v = v;
          best_s = *ps[i].score;
        }
      }
      if (vote_winner(ps) != best) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("vote mass is permutation-equivariant") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    ProposalSet ps;
    for (int i = 0; i < 5; ++i) ps.push_back(Proposal{u(rng), u(rng) / 2, u(rng)});
    std::vector<std::size_t> perm(ps.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ProposalSet permuted;
    for (auto i : perm) permuted.push_back(ps[i]);
    const auto v = vote_mass(ps);
    const auto vp = vote_mass(permuted);
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(vp[i] == doctest::Approx(v[perm[i]]));
    const Proposal a = vote_top1(ps);
    const Proposal b = vote_top1(permuted);
    CHECK(a.center == b.center);
    CHECK(a.width == b.width);
  }
}

TEST_CASE("attention ranking sorts by score and is stable") {
  const ProposalSet ps = {interval(0.0, 0.1, 0.2), interval(0.2, 0.3, 0.5),
                          interval(0.4, 0.5, 0.3)};
  const ProposalSet r = rank_by_attention(ps);
  CHECK(*r[0].score == 0.5);
  CHECK(*r[1].score == 0.3);
  CHECK(*r[2].score == 0.2);
  const ProposalSet equal = {interval(0.0, 0.1, 0.4), interval(0.5, 0.6, 0.4)};
  CHECK(rank_by_attention(equal)[0].center == doctest::Approx(0.05));
  CHECK_THROWS_AS(rank_by_attention({interval(0.0, 0.1)}), std::invalid_argument);
}

TEST_CASE("empty proposal sets are rejected") {
  CHECK_THROWS(vote_winner({}));
}

TEST_CASE("retrieval returns a ranked list inside the video") {
  auto w = mcmt::testing::make_world(mcmt::testing::tiny_config(), "retrieve");
  for (auto strategy : {InferenceStrategy::Vote, InferenceStrategy::AttentionScore}) {
    const Retrieval r = retrieve(*w.model, w.test[0], strategy);
    CHECK(r.proposals.size() == 2);
    CHECK(r.ranked.size() == 2);
    CHECK(r.order.size() == 2);
    CHECK(r.top1.start >= 0.0);
    CHECK(r.top1.end <= w.test[0].video.duration);
    CHECK(r.top1.start == r.ranked[0].start);
    CHECK(r.votes.size() == (strategy == InferenceStrategy::Vote ? 2u : 0u));
  }
}

TEST_CASE("with a single proposal both strategies agree") {
  const TrainConfig cfg =
      from_json(nlohmann::json{{"mc_enabled", false}}, mcmt::testing::tiny_config());
  REQUIRE(cfg.k == 1);
  auto w = mcmt::testing::make_world(cfg, "single");
  for (const Example& ex : w.test) {
    const Retrieval a = retrieve(*w.model, ex, InferenceStrategy::Vote);
    const Retrieval b = retrieve(*w.model, ex, InferenceStrategy::AttentionScore);
    CHECK(a.proposals.size() == 1);
    CHECK(a.top1.start == b.top1.start);
    CHECK(a.top1.end == b.top1.end);
  }
}

TEST_CASE("retrieval refuses a config for another architecture") {
  auto w = mcmt::testing::make_world(mcmt::testing::tiny_config(), "arch");
  TrainConfig other = mcmt::testing::tiny_config();
  other.k = 3;
  CHECK_THROWS_AS(retrieve(*w.model, w.test[0], InferenceStrategy::Vote, &other),
                  std::invalid_argument);
}
