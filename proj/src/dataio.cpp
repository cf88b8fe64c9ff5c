#include "mcmt/dataio.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mcmt {

namespace fs = std::filesystem;

std::vector<const ManifestRecord*> DatasetManifest::split(bool train) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records) {
    if (r.is_train() == train) out.push_back(&r);
  }
  return out;
}

ManifestRecord parse_manifest_record(std::string_view line, std::size_t line_no) {
  const std::string where = "manifest line " + std::to_string(line_no);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(where + ": parse error: " + e.what());
  }
  if (!j.is_object()) throw std::runtime_error(where + ": record must be a JSON object");

  ManifestRecord r;
  try {
    r.video_id = j.at("video_id").get<std::string>();
    r.duration = j.at("duration").get<double>();
    r.query = j.at("query").get<std::string>();
    r.split = j.value("split", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
  const std::string who = where + " (video " + r.video_id + ")";
  if (r.video_id.empty()) throw std::runtime_error(where + ": empty video_id");
  if (!(r.duration > 0.0) || !std::isfinite(r.duration)) {
    throw std::runtime_error(who + ": duration must be positive");
  }
  const bool has_start = j.contains("start") && !j["start"].is_null();
  const bool has_end = j.contains("end") && !j["end"].is_null();
  if (has_start != has_end) {
    throw std::runtime_error(who + ": start and end must appear together");
  }
  if (has_start) {
    Moment m{j["start"].get<double>(), j["end"].get<double>()};
    try {
      validate_moment(m, r.duration);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(who + ": invalid ground truth: " + e.what());
    }
    r.ground_truth = m;
  }
  if (r.split.empty()) r.split = r.ground_truth ? "test" : "train";
  return r;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  DatasetManifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    m.records.push_back(parse_manifest_record(line, line_no));
  }
  if (m.records.empty()) m.warnings.push_back("manifest " + path.string() + " is empty");
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& r : manifest.records) {
    nlohmann::ordered_json j;
    j["video_id"] = r.video_id;
    j["duration"] = r.duration;
    j["query"] = r.query;
    j["split"] = r.split;
    if (r.ground_truth) {
      j["start"] = r.ground_truth->start;
      j["end"] = r.ground_truth->end;
    }
    out << j.dump() << '\n';
  }
}

// -- feature files ------------------------------------------------------------

namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::array<char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    std::reverse(b.begin(), b.end());
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
  }
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw std::runtime_error(what + ": truncated file");
  }
  return to_little(v);
}

}  // namespace

fs::path feature_path(const fs::path& dir, const std::string& video_id) {
  return dir / (video_id + ".mcft");
}

void write_feature_file(const fs::path& path, const FeatureMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write feature file " + path.string());
  out.write(kFeatureMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) put<float>(out, static_cast<float>(m(i, j)));
  }
}

FeatureMatrix read_feature_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing feature file " + path.string());
  const std::string what = "feature file " + path.string();
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw std::runtime_error(what + ": bad magic");
  }
  const auto rows = get<std::uint32_t>(in, what);
  const auto cols = get<std::uint32_t>(in, what);
  FeatureMatrix m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = get<float>(in, what);
  }
  return m;
}

FeatureMatrix load_clip_features(const fs::path& dir, const std::string& video_id,
                                 int d_v) {
  const fs::path p = feature_path(dir, video_id);
  if (!fs::exists(p)) {
    throw std::runtime_error("missing feature file for video " + video_id + ": " +
                             p.string());
  }
  FeatureMatrix m = read_feature_file(p);
  if (m.cols() != d_v) {
    throw std::runtime_error("feature width mismatch for video " + video_id + ": file has " +
                             std::to_string(m.cols()) + ", config expects " +
                             std::to_string(d_v));
  }
  if (m.rows() < 1) throw std::runtime_error("feature file for video " + video_id + " is empty");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!m.row(i).allFinite()) {
      throw std::runtime_error("non-finite feature in video " + video_id + " at row " +
                               std::to_string(i));
    }
  }
  return m;
}

ClipFeatureSequence sample_clips(const FeatureMatrix& raw, int n_v, double duration,
                                 std::string video_id) {
  if (raw.rows() < 1) throw std::invalid_argument("sample_clips: no rows");
  if (n_v <= 0) throw std::invalid_argument("sample_clips: n_v must be positive");
  const auto L = static_cast<std::int64_t>(raw.rows());
  ClipFeatureSequence out;
  out.features.resize(n_v, raw.cols());
  for (std::int64_t j = 0; j < n_v; ++j) out.features.row(j) = raw.row(j * L / n_v);
  out.duration = duration;
  out.video_id = std::move(video_id);
  return out;
}

// -- vocabulary -------------------------------------------------------------------

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool is_stopword(std::string_view token) {
  static constexpr std::string_view kStop[] = {
      "a",     "an",    "the",   "this",  "that",  "these", "those", "some",  "any",
      "each",  "every", "in",    "on",    "at",    "of",    "to",    "from",  "with",
      "by",    "for",   "into",  "onto",  "over",  "under", "up",    "down",  "off",
      "out",   "about", "after", "before", "while", "then", "and",   "or",    "but",
      "as",    "than",  "so",    "i",     "you",   "he",    "she",   "it",    "we",
      "they",  "him",   "her",   "them",  "his",   "its",   "their", "is",    "are",
      "was",   "were",  "be",    "been",  "being", "am",    "has",   "have",  "had",
      "do",    "does",  "did",   "can",   "will",  "would", "should", "again", "there"};
  return std::find(std::begin(kStop), std::end(kStop), token) != std::end(kStop);
}

Vocab::Vocab() {
  add("<pad>", false);
  add("<unk>", false);
  add("<bos>", false);
  add("<mask>", false);
}

Vocab::Vocab(std::vector<std::string> tokens) : Vocab() {
  if (tokens.size() < static_cast<std::size_t>(kReserved)) {
    throw std::invalid_argument("vocab token list shorter than the reserved block");
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(kReserved); ++i) {
    if (tokens[i] != tokens_[i]) throw std::invalid_argument("vocab reserved tokens differ");
  }
  for (std::size_t i = kReserved; i < tokens.size(); ++i) {
    const bool content = !is_stopword(tokens[i]);
    add(std::move(tokens[i]), content);
  }
}

void Vocab::add(std::string token, bool content) {
  if (ids_.count(token)) throw std::invalid_argument("duplicate vocab token " + token);
  ids_.emplace(token, size());
  tokens_.push_back(std::move(token));
  content_.push_back(content);
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocab id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const {
  return ids_.count(std::string(token)) != 0;
}

Vocab build_vocab(const DatasetManifest& manifest, int vocab_size) {
  if (vocab_size < Vocab::kReserved) {
    throw std::invalid_argument("vocab size " + std::to_string(vocab_size) +
                                " is below the reserved token count");
  }
  const bool has_train =
      std::any_of(manifest.records.begin(), manifest.records.end(),
                  [](const ManifestRecord& r) { return r.is_train(); });
  std::map<std::string, std::int64_t> counts;
  for (const auto& r : manifest.records) {
    if (has_train && !r.is_train()) continue;
    for (auto& w : split_words(r.query)) ++counts[w];
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;  // map order already lexicographic
  });
  const auto keep = static_cast<std::size_t>(vocab_size - Vocab::kReserved);
  if (ranked.size() > keep) ranked.resize(keep);
  std::vector<std::string> tokens = Vocab().tokens();
  for (auto& [w, _] : ranked) tokens.push_back(w);
  return Vocab(std::move(tokens));
}

TokenizedQuery tokenize(std::string_view text, const Vocab& vocab, int n_q,
                        const EmbeddingTable& table) {
  if (n_q <= 0) throw std::invalid_argument("tokenize: n_q must be positive");
  if (table.rows() != vocab.size()) {
    throw std::invalid_argument("tokenize: embedding table rows do not match vocab size");
  }
  const auto words = split_words(text);
  TokenizedQuery q;
  q.ids.assign(static_cast<std::size_t>(n_q), Vocab::kPad);
  q.content_flags.assign(static_cast<std::size_t>(n_q), false);
  q.valid_len = static_cast<int>(std::min<std::size_t>(words.size(), n_q));
  for (int i = 0; i < q.valid_len; ++i) {
    const int id = vocab.id(words[static_cast<std::size_t>(i)]);
    q.ids[static_cast<std::size_t>(i)] = id;
    q.content_flags[static_cast<std::size_t>(i)] =
        id == Vocab::kUnk ? !is_stopword(words[static_cast<std::size_t>(i)])
                          : vocab.is_content(id);
  }
  refresh_embeddings(q, table);
  return q;
}

void refresh_embeddings(TokenizedQuery& q, const EmbeddingTable& table) {
  const auto n_q = static_cast<Eigen::Index>(q.ids.size());
  q.embeddings = FeatureMatrix::Zero(n_q, table.cols());
  for (Eigen::Index i = 0; i < n_q; ++i) {
    const int id = q.ids[static_cast<std::size_t>(i)];
    if (id != Vocab::kPad) q.embeddings.row(i) = table.row(id);
  }
}

EmbeddingTable load_embedding_table(const fs::path& path, const Vocab& vocab, int d_w,
                                    std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding table " + path.string());
  EmbeddingTable table(vocab.size(), d_w);
  std::vector<bool> found(static_cast<std::size_t>(vocab.size()), false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> row;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw std::runtime_error("embedding table line " + std::to_string(line_no) +
                                 ": malformed value '" + field + "'");
      }
    }
    if (static_cast<int>(row.size()) != d_w) {
      throw std::runtime_error("embedding table line " + std::to_string(line_no) +
                               ": expected " + std::to_string(d_w) + " values, got " +
                               std::to_string(row.size()));
    }
    if (!vocab.contains(token)) continue;
    const int id = vocab.id(token);
    for (int c = 0; c < d_w; ++c) table(id, c) = row[static_cast<std::size_t>(c)];
    found[static_cast<std::size_t>(id)] = true;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int id = 0; id < vocab.size(); ++id) {
    // Draw for every id so each token's row is independent of which others exist.
    Eigen::RowVectorXd r(d_w);
    for (int c = 0; c < d_w; ++c) r(c) = 0.1 * normal(rng);
    if (id == Vocab::kPad) {
      table.row(id).setZero();
    } else if (!found[static_cast<std::size_t>(id)]) {
      table.row(id) = r;
    }
  }
  return table;
}

}  // namespace mcmt
