#include "mcmt/reconstructor.hpp"

#include "mcmt/mask_generator.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mcmt {

using ad::Var;

TokenizedQuery reverse_query(const TokenizedQuery& query) {
  if (query.valid_len < 1) throw std::invalid_argument("reverse_query: empty query");
  TokenizedQuery out = query;
  const auto n = static_cast<std::size_t>(query.valid_len);
  std::reverse(out.ids.begin(), out.ids.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    out.content_flags[i] = query.content_flags[n - 1 - i];
    out.embeddings.row(static_cast<Eigen::Index>(i)) =
        query.embeddings.row(static_cast<Eigen::Index>(n - 1 - i));
  }
  return out;
}

MaskedQuery mask_query(const TokenizedQuery& query, std::mt19937_64& rng,
                       double content_weight, QueryDirection direction) {
  if (query.valid_len < 1) throw std::invalid_argument("mask_query: empty query");
  MaskedQuery m;
  m.ids = query.ids;
  m.target_ids = query.ids;
  m.valid_len = query.valid_len;
  m.direction = direction;
  m.embeddings = query.embeddings;

  std::vector<double> weights(static_cast<std::size_t>(query.valid_len));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] = query.content_flags[i] ? content_weight : 1.0;
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int want = masked_count(query.valid_len);
  for (int n = 0; n < want; ++n) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = unit(rng) * total;
    std::size_t pick = 0;
    for (; pick + 1 < weights.size(); ++pick) {
      if (weights[pick] > 0.0 && r < weights[pick]) break;
      r -= weights[pick];
    }
    while (weights[pick] == 0.0) --pick;  // only reachable through rounding at the tail
    weights[pick] = 0.0;
    m.masked_positions.push_back(static_cast<int>(pick));
  }
  std::sort(m.masked_positions.begin(), m.masked_positions.end());
  for (int p : m.masked_positions) m.ids[static_cast<std::size_t>(p)] = Vocab::kMask;
  return m;
}

Reconstructor::Reconstructor(const TrainConfig& config, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  const int d = config_.d_h;
  video_in_ = nn::Linear::make(params_, "rec.video_in", config_.d_v, d, true, rng);
  video_pos_ = &params_.add("rec.video_pos", nn::sinusoidal_positions(config_.n_v, d));
  word_in_ = nn::Linear::make(params_, "rec.word_in", config_.d_w, d, true, rng);
  word_pos_ = &params_.add("rec.word_pos", nn::sinusoidal_positions(config_.n_q, d));
  mask_embedding_ = &params_.add("rec.mask_embedding", nn::fan_in_uniform(1, config_.d_w, rng));
  for (int l = 0; l < config_.layers; ++l) {
    encoder_.push_back(nn::EncoderLayer::make(params_, "rec.enc" + std::to_string(l), d,
                                              config_.heads, rng));
  }
  for (int l = 0; l < config_.layers; ++l) {
    decoder_.push_back(nn::DecoderLayer::make(params_, "rec.dec" + std::to_string(l), d,
                                              config_.heads, rng));
  }
  final_norm_ = nn::LayerNorm::make(params_, "rec.final_ln", d);
  vocab_out_ = nn::Linear::make(params_, "rec.vocab_out", d, config_.vocab_size, true, rng);
}

Var Reconstructor::encode(nn::Context& ctx, const Var& video, const Var& mask) const {
  if (video.rows() != config_.n_v || video.cols() != config_.d_v) {
    throw std::invalid_argument("masked_encode: video features must be n_v x d_v");
  }
  if (mask.rows() != 1 || mask.cols() != config_.n_v) {
    throw std::invalid_argument("masked_encode: mask must be 1 x n_v");
  }
  Var h = ad::add(video_in_(ctx, video), ctx.param(*video_pos_));
  for (const auto& layer : encoder_) h = layer(ctx, h, mask);
  return h;
}

Var Reconstructor::decode(nn::Context& ctx, const MaskedQuery& query, const Var& encoded,
                          const Var& mask) const {
  const auto n_q = static_cast<Eigen::Index>(query.ids.size());
  if (n_q != config_.n_q || query.embeddings.rows() != n_q ||
      query.embeddings.cols() != config_.d_w) {
    throw std::invalid_argument("masked_decode: query must be n_q x d_w");
  }
  if (encoded.rows() != config_.n_v || mask.cols() != config_.n_v) {
    throw std::invalid_argument("masked_decode: encoded video / mask length mismatch");
  }
  auto& g = ctx.graph();
  Eigen::MatrixXd base = query.embeddings;
  Eigen::MatrixXd selector = Eigen::MatrixXd::Zero(n_q, 1);
  for (int p : query.masked_positions) {
    base.row(p).setZero();
    selector(p, 0) = 1.0;
  }
  Var words = ad::add(g.constant(std::move(base)),
                      ad::matmul(g.constant(std::move(selector)), ctx.param(*mask_embedding_)));
  Var h = ad::add(word_in_(ctx, words), ctx.param(*word_pos_));
  const Var pad = g.constant(padding_weights(config_.n_q, query.valid_len));
  for (const auto& layer : decoder_) h = layer(ctx, h, encoded, pad, true, mask);
  return h;
}

Var Reconstructor::logits(nn::Context& ctx, const Var& hidden) const {
  return vocab_out_(ctx, final_norm_(ctx, hidden));
}

Var Reconstructor::reconstruction_loss(nn::Context& ctx, const Var& encoded, const Var& mask,
                                       const MaskedQuery& query) const {
  Var out = logits(ctx, decode(ctx, query, encoded, mask));
  return ad::cross_entropy_sum(out, query.target_ids, query.valid_len);
}

Eigen::MatrixXd word_distribution(const Eigen::MatrixXd& logits) {
  if (!logits.allFinite()) throw std::runtime_error("word_distribution: non-finite logits");
  ad::Graph g;
  return ad::softmax_rows(g.constant(logits)).value();
}

}  // namespace mcmt
