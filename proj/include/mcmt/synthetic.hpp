#pragma once

#include "mcmt/dataio.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mcmt {

/// Shape of a planted-moment dataset. Every video contains one moment whose
/// clips carry the signature of an event class; the query names that class
/// through exactly one content word.
struct SyntheticConfig {
  int n_train = 500;
  int n_test = 100;
  int n_v = 32;            // nominal clip count; raw lengths vary around it
  int raw_len_min = 32;
  int raw_len_max = 64;
  int d_v = 16;
  int d_w = 16;
  int vocab_size = 50;     // reserved tokens included
  int n_signatures = 10;
  int tokens_per_signature = 3;
  int query_len_min = 5;
  int query_len_max = 7;
  double moment_frac_min = 0.15;
  double moment_frac_max = 0.35;
  double sigma = 0.3;             // noise on clips inside the moment
  double background_scale = 1.0;  // std of independent noise outside the moment
  int distractors = 0;            // extra events of other signatures, never overlapping
  double duration_min = 30.0;
  double duration_max = 120.0;

  void validate() const;
};

struct SyntheticDataset {
  DatasetManifest manifest;
  std::map<std::string, FeatureMatrix> features;  // raw clip features per video
  std::vector<std::string> embedding_tokens;
  FeatureMatrix embeddings;                       // one row per embedding token
  FeatureMatrix signatures;                       // n_signatures x d_v
  std::vector<int> video_signature;               // per manifest record
  std::vector<std::pair<int, int>> moment_rows;   // raw [begin, end) rows per record
};

SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& config,
                                            std::uint64_t seed);

/// Writes manifest.jsonl, embeddings.txt and features/<id>.mcft under `dir`.
void write_synthetic_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir);

/// Filler words used by the generator; all of them are stopwords.
const std::vector<std::string>& synthetic_filler_words();

}  // namespace mcmt
