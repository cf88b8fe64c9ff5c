#include "mcmt/model.hpp"

#include <random>
#include <stdexcept>

namespace mcmt {

Model::Model(TrainConfig cfg, Vocab v, EmbeddingTable table)
    : init_rng_(cfg.seed),
      config(std::move(cfg)),
      vocab(std::move(v)),
      embeddings(std::move(table)),
      generator(config, init_rng_),
      reconstructor(config, init_rng_) {
  if (vocab.size() > config.vocab_size) {
    throw std::invalid_argument("vocabulary has " + std::to_string(vocab.size()) +
                                " tokens but vocab_size is " + std::to_string(config.vocab_size));
  }
  if (embeddings.rows() != vocab.size() || embeddings.cols() != config.d_w) {
    throw std::invalid_argument("embedding table must be vocab.size() x d_w");
  }
}

Example Model::make_example(const std::string& video_id, const std::string& query_text,
                            const FeatureMatrix& raw_features, double duration,
                            std::optional<Moment> ground_truth) const {
  Example ex;
  ex.video_id = video_id;
  ex.query_text = query_text;
  ex.video = sample_clips(raw_features, config.n_v, duration, video_id);
  ex.query = tokenize(query_text, vocab, config.n_q, embeddings);
  if (ex.query.valid_len < 1) {
    throw std::invalid_argument("query for video " + video_id + " has no tokens");
  }
  ex.inverse = reverse_query(ex.query);
  ex.ground_truth = ground_truth;
  return ex;
}

std::vector<Example> Model::load_examples(const DatasetManifest& manifest, bool train_split,
                                          const std::filesystem::path& feature_dir) const {
  std::vector<Example> out;
  for (const auto* r : manifest.split(train_split)) {
    const FeatureMatrix raw = load_clip_features(feature_dir, r->video_id, config.d_v);
    out.push_back(make_example(r->video_id, r->query, raw, r->duration, r->ground_truth));
  }
  return out;
}

Model build_model(const TrainConfig& config, const DatasetManifest& manifest,
                  const std::filesystem::path& embedding_path) {
  Vocab vocab = build_vocab(manifest, config.vocab_size);
  EmbeddingTable table = load_embedding_table(embedding_path, vocab, config.d_w, config.seed);
  return Model(config, std::move(vocab), std::move(table));
}

}  // namespace mcmt
