#include "mcmt/mask_generator.hpp"

#include <stdexcept>
#include <string>

namespace mcmt {

using ad::Var;

Eigen::MatrixXd padding_weights(int n, int valid) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(1, n);
  w.leftCols(std::clamp(valid, 0, n)).setOnes();
  return w;
}

ProposalSet GeneratorOutput::proposals() const {
  const auto& c = centers.value();
  const auto& w = widths.value();
  const auto& b = aggregation.value();
  ProposalSet out;
  for (Eigen::Index i = 0; i < c.rows(); ++i) out.push_back({c(i, 0), w(i, 0), b(0, i)});
  return out;
}

MaskGenerator::MaskGenerator(const TrainConfig& config, std::mt19937_64& rng)
    : config_(config), k_(config.effective_k()) {
  config_.validate();
  const int d = config_.d_h;
  query_in_ = nn::Linear::make(params_, "gen.query_in", config_.d_w, d, true, rng);
  query_pos_ = &params_.add("gen.query_pos", nn::sinusoidal_positions(config_.n_q, d));
  video_in_ = nn::Linear::make(params_, "gen.video_in", config_.d_v, d, true, rng);
  video_pos_ = &params_.add("gen.video_pos", nn::sinusoidal_positions(config_.n_v, d));
  for (int l = 0; l < config_.layers; ++l) {
    encoder_.push_back(nn::EncoderLayer::make(params_, "gen.enc" + std::to_string(l), d,
                                              config_.heads, rng));
  }
  for (int l = 0; l < config_.layers; ++l) {
    decoder_.push_back(nn::DecoderLayer::make(params_, "gen.dec" + std::to_string(l), d,
                                              config_.heads, rng));
  }
  if (config_.fusion_mode == FusionMode::Attention) {
    fusion_score_ = nn::Linear::make(params_, "gen.fusion_score", d, 1, false, rng);
    proposal_ = nn::Linear::make(params_, "gen.proposal", d, 2 * k_, true, rng);
  } else {
    proposal_ = nn::Linear::make(params_, "gen.proposal", 2 * d, 2 * k_, true, rng);
  }
  mask_score_ = &params_.add("gen.mask_score", nn::fan_in_uniform(config_.n_v, 1, rng));
}

Var MaskGenerator::fuse(nn::Context& ctx, const ClipFeatureSequence& video,
                        const TokenizedQuery& query) const {
  if (video.features.rows() != config_.n_v || video.features.cols() != config_.d_v) {
    throw std::invalid_argument("fuse: video features must be n_v x d_v");
  }
  if (query.embeddings.rows() != config_.n_q || query.embeddings.cols() != config_.d_w) {
    throw std::invalid_argument("fuse: query embeddings must be n_q x d_w");
  }
  auto& g = ctx.graph();
  const Var pad = g.constant(padding_weights(config_.n_q, query.valid_len));
  Var q = ad::add(query_in_(ctx, g.constant(query.embeddings)), ctx.param(*query_pos_));
  for (const auto& layer : encoder_) q = layer(ctx, q, pad);
  Var h = ad::add(video_in_(ctx, g.constant(video.features)), ctx.param(*video_pos_));
  for (const auto& layer : decoder_) h = layer(ctx, h, q, std::nullopt, false, pad);
  if (!h.value().allFinite()) throw std::runtime_error("fuse: non-finite activations");
  return h;
}

namespace {

std::pair<Var, Var> split_centers_widths(const Var& logits, int k, double width_cap) {
  Var s = ad::sigmoid(logits);
  Var c = ad::transpose(ad::slice_cols(s, 0, k));
  Var w = ad::scale(ad::transpose(ad::slice_cols(s, k, k)), width_cap);
  return {c, w};
}

void check_summary(const Var& h, int d, const char* who) {
  if (h.rows() != 1 || h.cols() != d) {
    throw std::invalid_argument(std::string(who) + ": summary vectors must be 1 x d_h");
  }
}

}  // namespace

std::pair<Var, Var> MaskGenerator::predict_concat(nn::Context& ctx, const Var& h_f,
                                                  const Var& h_i) const {
  if (config_.fusion_mode != FusionMode::Concat) {
    throw std::logic_error("predict_concat on an attention-fusion generator");
  }
  check_summary(h_f, config_.d_h, "predict_concat");
  check_summary(h_i, config_.d_h, "predict_concat");
  return split_centers_widths(proposal_(ctx, ad::concat_cols(h_f, h_i)), k_,
                              config_.width_cap);
}

std::tuple<Var, Var, Var> MaskGenerator::predict_attention(nn::Context& ctx, const Var& h_f,
                                                           const Var& h_i) const {
  if (config_.fusion_mode != FusionMode::Attention) {
    throw std::logic_error("predict_attention on a concat-fusion generator");
  }
  check_summary(h_f, config_.d_h, "predict_attention");
  check_summary(h_i, config_.d_h, "predict_attention");
  Var stacked = ad::concat_rows(h_f, h_i);                                  // 2 x d
  Var beta = ad::softmax_rows(ad::transpose(fusion_score_(ctx, stacked)));  // 1 x 2
  Var fused = ad::matmul(beta, stacked);                                    // 1 x d
  auto [c, w] = split_centers_widths(proposal_(ctx, fused), k_, config_.width_cap);
  return {c, w, beta};
}

std::pair<Var, Var> MaskGenerator::aggregate(nn::Context& ctx, const Var& masks) const {
  if (masks.cols() != config_.n_v) throw std::invalid_argument("aggregate: masks must be k x n_v");
  Var beta = ad::softmax_rows(ad::transpose(ad::matmul(masks, ctx.param(*mask_score_))));
  return {ad::matmul(beta, masks), beta};
}

GeneratorOutput MaskGenerator::forward(nn::Context& ctx, const ClipFeatureSequence& video,
                                       const TokenizedQuery& query,
                                       const TokenizedQuery* inverse) const {
  GeneratorOutput out;
  out.fused_forward = fuse(ctx, video, query);
  if (config_.mt_enabled) {
    if (!inverse) throw std::invalid_argument("generator: inverse query required with MT on");
    out.fused_inverse = fuse(ctx, video, *inverse);
  } else {
    out.fused_inverse = out.fused_forward;
  }
  const Var h_f = ad::slice_rows(out.fused_forward, config_.n_v - 1, 1);
  const Var h_i = ad::slice_rows(out.fused_inverse, config_.n_v - 1, 1);
  if (config_.fusion_mode == FusionMode::Attention) {
    auto [c, w, beta] = predict_attention(ctx, h_f, h_i);
    out.centers = c;
    out.widths = w;
    out.fusion_weights = beta;
  } else {
    std::tie(out.centers, out.widths) = predict_concat(ctx, h_f, h_i);
  }
  out.masks = ad::gaussian_masks(out.centers, out.widths, config_.n_v, config_.alpha,
                                 config_.width_floor);
  std::tie(out.positive, out.aggregation) = aggregate(ctx, out.masks);
  out.easy = ad::add_scalar(ad::scale(out.positive, -1.0), 1.0);
  out.hard = ctx.graph().constant(Eigen::MatrixXd::Ones(1, config_.n_v));
  return out;
}

ProposalSet MaskGenerator::predict_proposals_concat(const Eigen::RowVectorXd& h_f,
                                                    const Eigen::RowVectorXd& h_i) const {
  ad::Graph g;
  nn::Context ctx(g, false);
  auto [c, w] = predict_concat(ctx, g.constant(h_f), g.constant(h_i));
  ProposalSet out;
  for (int i = 0; i < k_; ++i) out.push_back({c.value()(i, 0), w.value()(i, 0), 1.0 / k_});
  return out;
}

ProposalSet MaskGenerator::predict_proposals_attn(const Eigen::RowVectorXd& h_f,
                                                  const Eigen::RowVectorXd& h_i,
                                                  Eigen::RowVector2d* fusion_weights) const {
  ad::Graph g;
  nn::Context ctx(g, false);
  auto [c, w, beta] = predict_attention(ctx, g.constant(h_f), g.constant(h_i));
  if (fusion_weights) *fusion_weights = beta.value().row(0);
  ProposalSet out;
  for (int i = 0; i < k_; ++i) out.push_back({c.value()(i, 0), w.value()(i, 0), 1.0 / k_});
  return out;
}

std::pair<std::vector<double>, std::vector<double>> MaskGenerator::aggregate_masks(
    const MaskMatrix& masks) const {
  if (masks.rows() < 1) throw std::invalid_argument("aggregate_masks: need k >= 1");
  ad::Graph g;
  nn::Context ctx(g, false);
  auto [pos, beta] = aggregate(ctx, g.constant(masks));
  const auto& p = pos.value();
  const auto& b = beta.value();
  return {std::vector<double>(p.data(), p.data() + p.size()),
          std::vector<double>(b.data(), b.data() + b.size())};
}

MaskMatrix build_gaussian_masks(const ProposalSet& proposals, int n_v, double alpha,
                                double width_floor) {
  if (proposals.empty()) throw std::invalid_argument("build_gaussian_masks: no proposals");
  if (!(alpha > 0.0)) throw std::invalid_argument("build_gaussian_masks: alpha must be positive");
  const auto k = static_cast<Eigen::Index>(proposals.size());
  Eigen::MatrixXd c(k, 1), w(k, 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& p = proposals[static_cast<std::size_t>(i)];
    if (!(p.width > 0.0)) throw std::invalid_argument("build_gaussian_masks: zero width");
    c(i, 0) = p.center;
    w(i, 0) = p.width;
  }
  ad::Graph g;
  return ad::gaussian_masks(g.constant(c), g.constant(w), n_v, alpha, width_floor).value();
}

MaskTriplet mine_negatives(std::span<const double> positive) {
  MaskTriplet t;
  t.positive.assign(positive.begin(), positive.end());
  t.easy.reserve(positive.size());
  for (double p : positive) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mine_negatives: entry outside [0,1]");
    t.easy.push_back(1.0 - p);
  }
  t.hard.assign(positive.size(), 1.0);
  return t;
}

}  // namespace mcmt
