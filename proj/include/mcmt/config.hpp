#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

namespace mcmt {

enum class FusionMode { Concat, Attention };
enum class InferenceStrategy { Vote, AttentionScore };
enum class VoteMode { Continuous, Threshold };

std::string to_string(FusionMode m);
std::string to_string(InferenceStrategy s);
std::string to_string(VoteMode m);
FusionMode parse_fusion_mode(std::string_view s);
InferenceStrategy parse_strategy(std::string_view s);
VoteMode parse_vote_mode(std::string_view s);

/// Every hyperparameter of a model and its training run. Field names match
/// the keys of the JSON config file.
struct TrainConfig {
  double learning_rate = 4e-4;
  int batch_size = 64;
  int n_v = 200;
  int n_q = 20;
  int d_v = 512;
  int d_w = 300;
  int vocab_size = 8000;  // N_q, reserved tokens included
  int d_h = 256;
  int layers = 3;
  int heads = 4;
  double beta1 = 0.1;
  double beta2 = 0.15;
  double beta3 = 0.1;
  double beta4 = 0.15;
  double alpha = 5.0;
  double width_cap = 1.0;
  double width_floor = 1e-3;
  int k = 7;
  FusionMode fusion_mode = FusionMode::Attention;
  bool mt_enabled = true;
  bool mc_enabled = true;
  int epochs = 10;
  std::uint64_t seed = 1;
  InferenceStrategy inference_strategy = InferenceStrategy::Vote;
  VoteMode vote_mode = VoteMode::Continuous;
  double vote_threshold = 0.5;
  double content_mask_weight = 3.0;
  double grad_clip = 5.0;

  /// Proposal count actually used: 1 whenever multi-proposal is disabled.
  int effective_k() const { return mc_enabled ? k : 1; }

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;

  /// Hex digest over the fields that determine parameter shapes and model
  /// semantics. Training-only knobs (lr, epochs, seed, strategy) are excluded.
  std::string fingerprint() const;
};

/// Built-in profiles: "charades", "activitynet", "synthetic".
TrainConfig profile(std::string_view name);

nlohmann::json to_json(const TrainConfig& c);
/// Applies the keys present in `j` on top of `base`; unknown keys are rejected.
TrainConfig from_json(const nlohmann::json& j, TrainConfig base = {});
TrainConfig load_config(const std::string& path, TrainConfig base = {});

}  // namespace mcmt
