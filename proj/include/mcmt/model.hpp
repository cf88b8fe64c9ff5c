#pragma once

#include "mcmt/config.hpp"
#include "mcmt/dataio.hpp"
#include "mcmt/mask_generator.hpp"
#include "mcmt/reconstructor.hpp"

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mcmt {

/// One (video, query) pair ready for the networks.
struct Example {
  std::string video_id;
  std::string query_text;
  ClipFeatureSequence video;
  TokenizedQuery query;
  TokenizedQuery inverse;
  std::optional<Moment> ground_truth;
};

/// Everything needed to train or run retrieval: hyperparameters, the word
/// table, and both networks.
struct Model {
  Model(TrainConfig config, Vocab vocab, EmbeddingTable embeddings);

 private:
  // Declared first: both networks draw their initial weights from it.
  std::mt19937_64 init_rng_;

 public:
  TrainConfig config;
  Vocab vocab;
  EmbeddingTable embeddings;
  MaskGenerator generator;
  Reconstructor reconstructor;

  Example make_example(const std::string& video_id, const std::string& query_text,
                       const FeatureMatrix& raw_features, double duration,
                       std::optional<Moment> ground_truth = std::nullopt) const;

  /// Builds examples for one split, loading features from `feature_dir`.
  std::vector<Example> load_examples(const DatasetManifest& manifest, bool train_split,
                                     const std::filesystem::path& feature_dir) const;
};

/// Vocab, embedding table and a freshly initialized model for a data directory
/// laid out as manifest.jsonl, embeddings.txt and features/.
Model build_model(const TrainConfig& config, const DatasetManifest& manifest,
                  const std::filesystem::path& embedding_path);

}  // namespace mcmt
