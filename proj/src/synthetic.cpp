#include "mcmt/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

namespace mcmt {

namespace fs = std::filesystem;

const std::vector<std::string>& synthetic_filler_words() {
  static const std::vector<std::string> kFiller = {
      "the", "a", "an", "in", "on", "at", "of", "to",
      "with", "and", "then", "while", "is", "he", "she", "it"};
  return kFiller;
}

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("synthetic config: " + m); };
  if (n_train < 0 || n_test < 0 || n_train + n_test == 0) fail("need at least one video");
  if (n_v <= 0 || d_v <= 0 || d_w <= 0) fail("dimensions must be positive");
  if (raw_len_min < 1 || raw_len_max < raw_len_min) fail("bad raw length range");
  if (n_signatures < 1 || tokens_per_signature < 1) fail("need at least one signature token");
  if (query_len_min < 1 || query_len_max < query_len_min) fail("bad query length range");
  if (!(moment_frac_min > 0.0) || moment_frac_max < moment_frac_min)
    fail("bad moment fraction range");
  if (moment_frac_max > 1.0) fail("moment longer than the video");
  if (sigma < 0.0 || background_scale < 0.0) fail("noise scales must be non-negative");
  if (distractors < 0) fail("distractors must be non-negative");
  if (!(duration_min > 0.0) || duration_max < duration_min) fail("bad duration range");
  const int needed = static_cast<int>(synthetic_filler_words().size()) +
                     n_signatures * tokens_per_signature;
  if (needed > vocab_size - Vocab::kReserved) {
    fail("vocab_size " + std::to_string(vocab_size) + " cannot hold " +
         std::to_string(needed) + " tokens");
  }
}

namespace {

std::string signature_token(int sig, int t) {
  return "ev" + std::to_string(sig) + "w" + std::to_string(t);
}

// Values are rounded through float so that they survive the f32 file format.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform_int = [&rng](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  SyntheticDataset ds;
  ds.signatures.resize(cfg.n_signatures, cfg.d_v);
  for (Eigen::Index s = 0; s < ds.signatures.rows(); ++s) {
    for (Eigen::Index c = 0; c < ds.signatures.cols(); ++c) ds.signatures(s, c) = f32(normal(rng));
  }

  for (const auto& w : synthetic_filler_words()) ds.embedding_tokens.push_back(w);
  for (int s = 0; s < cfg.n_signatures; ++s) {
    for (int t = 0; t < cfg.tokens_per_signature; ++t)
      ds.embedding_tokens.push_back(signature_token(s, t));
  }
  ds.embeddings.resize(static_cast<Eigen::Index>(ds.embedding_tokens.size()), cfg.d_w);
  const double emb_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_w));
  for (Eigen::Index r = 0; r < ds.embeddings.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.embeddings.cols(); ++c)
      ds.embeddings(r, c) = std::round(normal(rng) * emb_scale * 1e6) / 1e6;
  }

  const auto& filler = synthetic_filler_words();
  const int total = cfg.n_train + cfg.n_test;
  for (int v = 0; v < total; ++v) {
    char id[32];
    std::snprintf(id, sizeof(id), "syn%05d", v);
    const int sig = uniform_int(0, cfg.n_signatures - 1);
    const int L = uniform_int(cfg.raw_len_min, cfg.raw_len_max);
    const double frac =
        cfg.moment_frac_min + (cfg.moment_frac_max - cfg.moment_frac_min) * unit(rng);
    const int len = std::clamp(static_cast<int>(std::lround(frac * L)), 1, L);
    const int begin = uniform_int(0, L - len);
    const double duration =
        std::round((cfg.duration_min + (cfg.duration_max - cfg.duration_min) * unit(rng)) * 100.0) /
        100.0;

    // Row owner: -1 for background, otherwise the signature planted there.
    std::vector<int> owner(static_cast<std::size_t>(L), -1);
    std::fill(owner.begin() + begin, owner.begin() + begin + len, sig);
    for (int d = 0; d < cfg.distractors && cfg.n_signatures > 1; ++d) {
      int other = uniform_int(0, cfg.n_signatures - 2);
      if (other >= sig) ++other;
      const double dfrac =
          cfg.moment_frac_min + (cfg.moment_frac_max - cfg.moment_frac_min) * unit(rng);
      int dlen = std::clamp(static_cast<int>(std::lround(dfrac * L)), 1, L);
      // Start rows where a run of dlen free rows fits; shrink until one exists.
      std::vector<int> starts;
      for (; dlen >= 1 && starts.empty(); --dlen) {
        for (int s0 = 0; s0 + dlen <= L; ++s0) {
          if (std::all_of(owner.begin() + s0, owner.begin() + s0 + dlen,
                          [](int o) { return o < 0; }))
            starts.push_back(s0);
        }
        if (!starts.empty()) break;
      }
      if (starts.empty()) break;
      const int s0 = starts[static_cast<std::size_t>(
          uniform_int(0, static_cast<int>(starts.size()) - 1))];
      std::fill(owner.begin() + s0, owner.begin() + s0 + dlen, other);
    }

    FeatureMatrix raw(L, cfg.d_v);
    for (int r = 0; r < L; ++r) {
      const int o = owner[static_cast<std::size_t>(r)];
      for (int c = 0; c < cfg.d_v; ++c) {
        raw(r, c) = o >= 0 ? f32(ds.signatures(o, c) + cfg.sigma * normal(rng))
                           : f32(cfg.background_scale * normal(rng));
      }
    }

    const int qlen = uniform_int(cfg.query_len_min, cfg.query_len_max);
    const int content_pos = uniform_int(0, qlen - 1);
    std::string query;
    for (int p = 0; p < qlen; ++p) {
      const std::string word =
          p == content_pos
              ? signature_token(sig, uniform_int(0, cfg.tokens_per_signature - 1))
              : filler[static_cast<std::size_t>(
                    uniform_int(0, static_cast<int>(filler.size()) - 1))];
      if (!query.empty()) query += ' ';
      query += word;
    }

    ManifestRecord rec;
    rec.video_id = id;
    rec.duration = duration;
    rec.query = query;
    rec.split = v < cfg.n_train ? "train" : "test";
    rec.ground_truth = Moment{duration * begin / L, std::min(duration, duration * (begin + len) / L)};
    ds.manifest.records.push_back(std::move(rec));
    ds.features.emplace(id, std::move(raw));
    ds.video_signature.push_back(sig);
    ds.moment_rows.emplace_back(begin, begin + len);
  }
  return ds;
}

void write_synthetic_dataset(const SyntheticDataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "features");
  write_manifest(ds.manifest, dir / "manifest.jsonl");
  for (const auto& [id, m] : ds.features) write_feature_file(feature_path(dir / "features", id), m);
  std::ofstream emb(dir / "embeddings.txt", std::ios::binary);
  if (!emb) throw std::runtime_error("cannot write " + (dir / "embeddings.txt").string());
  char buf[64];
  for (std::size_t r = 0; r < ds.embedding_tokens.size(); ++r) {
    emb << ds.embedding_tokens[r];
    for (Eigen::Index c = 0; c < ds.embeddings.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), " %.6f", ds.embeddings(static_cast<Eigen::Index>(r), c));
      emb << buf;
    }
    emb << '\n';
  }
}

}  // namespace mcmt
