#pragma once

#include "mcmt/model.hpp"
#include "mcmt/objectives.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mcmt {

using GradientMap = std::unordered_map<const nn::Parameter*, Eigen::MatrixXd>;

/// Adaptive-moment optimizer over one parameter store.
class Adam {
 public:
  Adam(nn::ParameterStore& store, double learning_rate, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  /// Clips the joint gradient norm to `clip_norm` and applies one update.
  /// Returns the norm before clipping.
  double step(const GradientMap& grads, double clip_norm);
  long steps() const { return t_; }

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<Eigen::MatrixXd> m_, v_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

struct StepReport {
  LossBundle reconstruction;  // phase A: reconstructor update
  LossBundle contrastive;     // phase B: generator update, all six CE terms
  std::vector<std::string> phases;
};

/// Alternating optimization: the reconstructor learns from the reconstruction loss with the
/// generator frozen, then the generator learns from the contrastive loss with the
/// reconstructor frozen. Both happen for every batch.
class Trainer {
 public:
  explicit Trainer(Model& model);

  StepReport train_step(std::span<const Example* const> batch);

  /// Called after each optimizer update with "reconstructor" or "generator".
  std::function<void(std::string_view)> on_optimizer_step;

  std::mt19937_64& masking_rng() { return masking_rng_; }

 private:
  Model& model_;
  Adam generator_opt_;
  Adam reconstructor_opt_;
  std::mt19937_64 masking_rng_;
};

struct EpochRecord {
  int epoch = 0;
  int steps = 0;
  LossBundle reconstruction;  // epoch means
  LossBundle contrastive;
  std::optional<std::vector<double>> eval_rank1;  // at eval_thresholds
  std::optional<double> eval_miou;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  const std::vector<Example>* eval_set = nullptr;
  std::vector<double> eval_thresholds = {0.3, 0.5, 0.7};
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::vector<std::filesystem::path> checkpoints;
};

/// Runs config.epochs epochs with seeded shuffling. Writes
/// checkpoint_epoch_NNN.mcck (starting with the untrained epoch 0) and
/// metrics.jsonl into out_dir when one is given.
TrainResult train(Model& model, const std::vector<Example>& train_set,
                  const TrainOptions& options = {});

nlohmann::json to_json(const LossBundle& b);
nlohmann::json to_json(const EpochRecord& r, const std::vector<double>& thresholds);

}  // namespace mcmt
