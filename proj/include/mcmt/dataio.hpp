#pragma once

#include "mcmt/core_types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mcmt {

using FeatureMatrix = Eigen::MatrixXd;

/// Per-video clip features, one clip per row, after constant-interval sampling.
struct ClipFeatureSequence {
  FeatureMatrix features;  // n_v x d_v
  double duration = 0.0;
  std::string video_id;
};

struct ManifestRecord {
  std::string video_id;
  double duration = 0.0;
  std::string query;
  std::string split;  // "train", or an evaluation tag such as "test"/"val"
  std::optional<Moment> ground_truth;

  bool is_train() const { return split == "train"; }
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> warnings;

  std::vector<const ManifestRecord*> split(bool train) const;
};

/// Line-delimited JSON, one record per line. Blank lines are skipped.
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
ManifestRecord parse_manifest_record(std::string_view line, std::size_t line_no);

// -- clip feature files --------------------------------------------------------
// Layout: "MCFT", u32 rows, u32 cols, rows*cols little-endian f32, row-major.

inline constexpr char kFeatureMagic[4] = {'M', 'C', 'F', 'T'};

std::filesystem::path feature_path(const std::filesystem::path& dir,
                                   const std::string& video_id);
void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_feature_file(const std::filesystem::path& path);

/// Reads `<dir>/<video_id>.mcft` and checks width and finiteness.
FeatureMatrix load_clip_features(const std::filesystem::path& dir,
                                 const std::string& video_id, int d_v);

/// Row j of the output is raw row floor(j * L / n_v); short videos repeat rows.
ClipFeatureSequence sample_clips(const FeatureMatrix& raw, int n_v, double duration = 0.0,
                                 std::string video_id = {});

// -- vocabulary ------------------------------------------------------------------

/// Lowercased runs of letters, digits and apostrophes.
std::vector<std::string> split_words(std::string_view text);

/// Closed-class words that are never flagged as content words.
bool is_stopword(std::string_view token);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kMask = 3;
  static constexpr int kReserved = 4;

  Vocab();
  /// Rebuilds a vocabulary from its id-ordered token list (reserved first).
  explicit Vocab(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool is_content(int id) const { return content_[static_cast<std::size_t>(id)]; }
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void add(std::string token, bool content);

  std::vector<std::string> tokens_;
  std::vector<bool> content_;
  std::unordered_map<std::string, int> ids_;
};

/// Keeps the `vocab_size - Vocab::kReserved` most frequent tokens, ties broken
/// lexicographically. Counts come from the train split when one exists.
Vocab build_vocab(const DatasetManifest& manifest, int vocab_size);

struct TokenizedQuery {
  std::vector<int> ids;           // length n_q
  int valid_len = 0;
  std::vector<bool> content_flags;  // length n_q
  FeatureMatrix embeddings;       // n_q x d_w, zero rows at padding
};

using EmbeddingTable = Eigen::MatrixXd;  // vocab.size() x d_w

TokenizedQuery tokenize(std::string_view text, const Vocab& vocab, int n_q,
                        const EmbeddingTable& table);

/// Re-looks-up embeddings after ids have been edited.
void refresh_embeddings(TokenizedQuery& q, const EmbeddingTable& table);

/// Text table `token v1 ... v_dw`. Vocab tokens missing from the file receive a
/// seeded N(0, 0.1^2) row; PAD is all zeros.
EmbeddingTable load_embedding_table(const std::filesystem::path& path, const Vocab& vocab,
                                    int d_w, std::uint64_t seed = 0);

}  // namespace mcmt
