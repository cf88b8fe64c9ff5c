#include "mcmt/config.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace mcmt {

std::string to_string(FusionMode m) {
  return m == FusionMode::Concat ? "concat" : "attention";
}

std::string to_string(InferenceStrategy s) {
  return s == InferenceStrategy::Vote ? "vote" : "attn";
}

std::string to_string(VoteMode m) {
  return m == VoteMode::Continuous ? "continuous" : "threshold";
}

FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "concat" || s == "CONCAT" || s == "con") return FusionMode::Concat;
  if (s == "attention" || s == "ATTENTION" || s == "att") return FusionMode::Attention;
  throw std::invalid_argument("unknown fusion mode '" + std::string(s) + "'");
}

InferenceStrategy parse_strategy(std::string_view s) {
  if (s == "vote" || s == "VOTE") return InferenceStrategy::Vote;
  if (s == "attn" || s == "ATTENTION_SCORE" || s == "attention_score")
    return InferenceStrategy::AttentionScore;
  throw std::invalid_argument("unknown inference strategy '" + std::string(s) + "'");
}

VoteMode parse_vote_mode(std::string_view s) {
  if (s == "continuous") return VoteMode::Continuous;
  if (s == "threshold") return VoteMode::Threshold;
  throw std::invalid_argument("unknown vote mode '" + std::string(s) + "'");
}

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw std::invalid_argument("config field '" + field + "' " + why);
}

}  // namespace

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "learning_rate", "must be positive");
  require(batch_size > 0, "batch_size", "must be positive");
  require(n_v > 0, "n_v", "must be positive");
  require(n_q > 0, "n_q", "must be positive");
  require(d_v > 0, "d_v", "must be positive");
  require(d_w > 0, "d_w", "must be positive");
  require(vocab_size > 4, "vocab_size", "must exceed the reserved token count");
  require(d_h > 0, "d_h", "must be positive");
  require(layers > 0, "layers", "must be positive");
  require(heads > 0 && d_h % heads == 0, "heads", "must divide d_h");
  require(beta1 >= 0.0 && beta2 >= 0.0 && beta3 >= 0.0 && beta4 >= 0.0, "beta1..beta4",
          "must be non-negative");
  require(beta1 < beta2, "beta1", "must be smaller than beta2");
  require(beta3 < beta4, "beta3", "must be smaller than beta4");
  require(alpha > 0.0, "alpha", "must be positive");
  require(width_cap > 0.0 && width_cap <= 1.0, "width_cap", "must lie in (0,1]");
  require(width_floor > 0.0 && width_floor < width_cap, "width_floor",
          "must lie in (0, width_cap)");
  require(k > 0, "k", "must be positive");
  require(mc_enabled || k == 1, "k", "must be 1 when mc_enabled is false");
  require(epochs >= 0, "epochs", "must be non-negative");
  require(vote_threshold >= 0.0 && vote_threshold <= 1.0, "vote_threshold",
          "must lie in [0,1]");
  require(content_mask_weight > 0.0, "content_mask_weight", "must be positive");
  require(grad_clip > 0.0, "grad_clip", "must be positive");
}

std::string TrainConfig::fingerprint() const {
  nlohmann::json arch = {
      {"n_v", n_v},       {"n_q", n_q},
      {"d_v", d_v},       {"d_w", d_w},
      {"vocab_size", vocab_size},
      {"d_h", d_h},       {"layers", layers},
      {"heads", heads},   {"alpha", alpha},
      {"width_cap", width_cap},
      {"width_floor", width_floor},
      {"k", effective_k()},
      {"fusion_mode", to_string(fusion_mode)},
      {"mt_enabled", mt_enabled},
  };
  // FNV-1a over the canonical dump; std::hash is not stable across builds.
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : arch.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainConfig profile(std::string_view name) {
  TrainConfig c;
  if (name == "charades") {
    c.learning_rate = 4e-4;
    c.batch_size = 128;
    c.n_v = 200;
    c.n_q = 20;
    c.d_v = 1024;
    c.d_w = 300;
    c.vocab_size = 1111;
    c.d_h = 256;
    c.alpha = 5.5;
    c.width_cap = 0.45;
    c.k = 10;
    c.fusion_mode = FusionMode::Concat;
  } else if (name == "activitynet") {
    c.learning_rate = 4e-4;
    c.batch_size = 64;
    c.n_v = 200;
    c.n_q = 20;
    c.d_v = 512;
    c.d_w = 300;
    c.vocab_size = 8000;
    c.d_h = 256;
    c.alpha = 5.0;
    c.width_cap = 1.0;
    c.k = 7;
    c.fusion_mode = FusionMode::Attention;
  } else if (name == "synthetic") {
    c.learning_rate = 1e-3;
    c.batch_size = 16;
    c.n_v = 32;
    c.n_q = 8;
    c.d_v = 16;
    c.d_w = 16;
    c.vocab_size = 50;
    c.d_h = 32;
    c.alpha = 5.0;
    c.width_cap = 0.45;
    c.k = 3;
    c.fusion_mode = FusionMode::Attention;
    c.epochs = 30;
    c.seed = 7;
  } else {
    throw std::invalid_argument("unknown profile '" + std::string(name) +
                                "' (expected charades, activitynet or synthetic)");
  }
  c.beta1 = c.beta3 = 0.1;
  c.beta2 = c.beta4 = 0.15;
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"n_v", c.n_v},
      {"n_q", c.n_q},
      {"d_v", c.d_v},
      {"d_w", c.d_w},
      {"vocab_size", c.vocab_size},
      {"d_h", c.d_h},
      {"layers", c.layers},
      {"heads", c.heads},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"beta3", c.beta3},
      {"beta4", c.beta4},
      {"alpha", c.alpha},
      {"width_cap", c.width_cap},
      {"width_floor", c.width_floor},
      {"k", c.k},
      {"fusion_mode", to_string(c.fusion_mode)},
      {"mt_enabled", c.mt_enabled},
      {"mc_enabled", c.mc_enabled},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"inference_strategy", to_string(c.inference_strategy)},
      {"vote_mode", to_string(c.vote_mode)},
      {"vote_threshold", c.vote_threshold},
      {"content_mask_weight", c.content_mask_weight},
      {"grad_clip", c.grad_clip},
  };
}

TrainConfig from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "n_v") c.n_v = v.get<int>();
      else if (key == "n_q") c.n_q = v.get<int>();
      else if (key == "d_v") c.d_v = v.get<int>();
      else if (key == "d_w") c.d_w = v.get<int>();
      else if (key == "vocab_size" || key == "N_q") c.vocab_size = v.get<int>();
      else if (key == "d_h") c.d_h = v.get<int>();
      else if (key == "layers") c.layers = v.get<int>();
      else if (key == "heads") c.heads = v.get<int>();
      else if (key == "beta1") c.beta1 = v.get<double>();
      else if (key == "beta2") c.beta2 = v.get<double>();
      else if (key == "beta3") c.beta3 = v.get<double>();
      else if (key == "beta4") c.beta4 = v.get<double>();
      else if (key == "alpha") c.alpha = v.get<double>();
      else if (key == "width_cap") c.width_cap = v.get<double>();
      else if (key == "width_floor") c.width_floor = v.get<double>();
      else if (key == "k") c.k = v.get<int>();
      else if (key == "fusion_mode") c.fusion_mode = parse_fusion_mode(v.get<std::string>());
      else if (key == "mt_enabled") c.mt_enabled = v.get<bool>();
      else if (key == "mc_enabled") c.mc_enabled = v.get<bool>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "inference_strategy")
        c.inference_strategy = parse_strategy(v.get<std::string>());
      else if (key == "vote_mode") c.vote_mode = parse_vote_mode(v.get<std::string>());
      else if (key == "vote_threshold") c.vote_threshold = v.get<double>();
      else if (key == "content_mask_weight") c.content_mask_weight = v.get<double>();
      else if (key == "grad_clip") c.grad_clip = v.get<double>();
      else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
  }
  if (!c.mc_enabled) c.k = 1;
  return c;
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config file " + path + ": " + e.what());
  }
  return from_json(j, base);
}

}  // namespace mcmt
