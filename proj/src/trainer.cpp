#include "mcmt/trainer.hpp"

#include "mcmt/checkpoint.hpp"
#include "mcmt/inference.hpp"
#include "mcmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace mcmt {

namespace fs = std::filesystem;
using ad::Var;

Adam::Adam(nn::ParameterStore& store, double learning_rate, double beta1, double beta2,
           double eps)
    : params_(store.all()), lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto* p : params_) {
    m_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }
}

double Adam::step(const GradientMap& grads, double clip_norm) {
  double sq = 0.0;
  for (const auto* p : params_) {
    auto it = grads.find(p);
    if (it != grads.end()) sq += it->second.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double factor = norm > clip_norm ? clip_norm / norm : 1.0;
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto it = grads.find(params_[i]);
    if (it == grads.end()) continue;
    const Eigen::MatrixXd g = it->second * factor;
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * g.cwiseProduct(g);
    params_[i]->value.array() -=
        lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
  return norm;
}

namespace {

void accumulate(GradientMap& into, const GradientMap& from) {
  for (const auto& [p, g] : from) {
    auto it = into.find(p);
    if (it == into.end()) into.emplace(p, g);
    else it->second += g;
  }
}

double checked(const Var& v, const char* term) {
  const double x = v.scalar();
  if (!std::isfinite(x)) {
    throw std::runtime_error(std::string("non-finite loss term ") + term +
                             "; optimizer step aborted");
  }
  return x;
}

struct MaskedPair {
  MaskedQuery forward;
  std::optional<MaskedQuery> inverse;
};

void add_scaled(LossBundle& into, const LossBundle& b, double s) {
  into.ce_f_pos += s * b.ce_f_pos;
  into.ce_i_pos += s * b.ce_i_pos;
  into.ce_f_hard += s * b.ce_f_hard;
  into.ce_i_hard += s * b.ce_i_hard;
  into.ce_f_easy += s * b.ce_f_easy;
  into.ce_i_easy += s * b.ce_i_easy;
  into.l_rec += s * b.l_rec;
  into.l_ivc_f += s * b.l_ivc_f;
  into.l_ivc_i += s * b.l_ivc_i;
  into.l_ivc += s * b.l_ivc;
  into.rec_terms = b.rec_terms;
}

}  // namespace

Trainer::Trainer(Model& model)
    : model_(model),
      generator_opt_(model.generator.params(), model.config.learning_rate),
      reconstructor_opt_(model.reconstructor.params(), model.config.learning_rate),
      masking_rng_(model.config.seed + 2) {}

StepReport Trainer::train_step(std::span<const Example* const> batch) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const TrainConfig& cfg = model_.config;
  const bool mt = cfg.mt_enabled;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  std::vector<MaskedPair> masked;
  masked.reserve(batch.size());
  for (const Example* ex : batch) {
    MaskedPair mp{mask_query(ex->query, masking_rng_, cfg.content_mask_weight,
                             QueryDirection::Forward),
                  std::nullopt};
    if (mt) {
      mp.inverse = mask_query(ex->inverse, masking_rng_, cfg.content_mask_weight,
                              QueryDirection::Inverse);
    }
    masked.push_back(std::move(mp));
  }

  StepReport report;

  // Phase A: reconstructor learns the reconstruction loss; generator runs without gradients.
  GradientMap rec_grads;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Example& ex = *batch[b];
    ad::Graph g;
    nn::Context gen_ctx(g, false);
    nn::Context rec_ctx(g, true);
    const GeneratorOutput out = model_.generator.forward(gen_ctx, ex.video, ex.query, &ex.inverse);
    const Var video = g.constant(ex.video.features);
    const Var pos = g.constant(out.positive.value());
    const Var hard = out.hard;
    const Var enc_pos = model_.reconstructor.encode(rec_ctx, video, pos);
    const Var enc_hard = model_.reconstructor.encode(rec_ctx, video, hard);

    LossBundle lb;
    Var f_pos = model_.reconstructor.reconstruction_loss(rec_ctx, enc_pos, pos, masked[b].forward);
    Var f_hard =
        model_.reconstructor.reconstruction_loss(rec_ctx, enc_hard, hard, masked[b].forward);
    lb.ce_f_pos = checked(f_pos, "ce_f_pos");
    lb.ce_f_hard = checked(f_hard, "ce_f_hard");
    Var total = ad::add(f_pos, f_hard);
    lb.rec_terms = 2;
    if (mt) {
      Var i_pos =
          model_.reconstructor.reconstruction_loss(rec_ctx, enc_pos, pos, *masked[b].inverse);
      Var i_hard =
          model_.reconstructor.reconstruction_loss(rec_ctx, enc_hard, hard, *masked[b].inverse);
      lb.ce_i_pos = checked(i_pos, "ce_i_pos");
      lb.ce_i_hard = checked(i_hard, "ce_i_hard");
      total = ad::add(total, ad::add(i_pos, i_hard));
      lb.rec_terms = 4;
      lb.l_rec = rec_loss(lb);
    } else {
      lb.l_rec = rec_loss_forward_only(lb);
    }
    g.backward(ad::scale(total, inv_b));
    accumulate(rec_grads, rec_ctx.gradients());
    add_scaled(report.reconstruction, lb, inv_b);
  }
  reconstructor_opt_.step(rec_grads, cfg.grad_clip);
  report.phases.emplace_back("reconstructor");
  if (on_optimizer_step) on_optimizer_step("reconstructor");

  // Phase B: generator learns the contrastive loss through the frozen reconstructor.
  GradientMap gen_grads;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Example& ex = *batch[b];
    ad::Graph g;
    nn::Context gen_ctx(g, true);
    nn::Context rec_ctx(g, false);
    const GeneratorOutput out = model_.generator.forward(gen_ctx, ex.video, ex.query, &ex.inverse);
    const Var video = g.constant(ex.video.features);
    const Var enc_pos = model_.reconstructor.encode(rec_ctx, video, out.positive);
    const Var enc_hard = model_.reconstructor.encode(rec_ctx, video, out.hard);
    const Var enc_easy = model_.reconstructor.encode(rec_ctx, video, out.easy);

    auto ce = [&](const Var& enc, const Var& mask, const MaskedQuery& q, const char* name) {
      Var v = model_.reconstructor.reconstruction_loss(rec_ctx, enc, mask, q);
      checked(v, name);
      return v;
    };
    LossBundle lb;
    const MaskedQuery& qf = masked[b].forward;
    Var f_pos = ce(enc_pos, out.positive, qf, "ce_f_pos");
    Var f_hard = ce(enc_hard, out.hard, qf, "ce_f_hard");
    Var f_easy = ce(enc_easy, out.easy, qf, "ce_f_easy");
    lb.ce_f_pos = f_pos.scalar();
    lb.ce_f_hard = f_hard.scalar();
    lb.ce_f_easy = f_easy.scalar();
    Var ivc = ivc_hinges(f_pos, f_hard, f_easy, cfg.beta1, cfg.beta2);
    lb.l_ivc_f = ivc.scalar();
    lb.rec_terms = 2;
    if (mt) {
      const MaskedQuery& qi = *masked[b].inverse;
      Var i_pos = ce(enc_pos, out.positive, qi, "ce_i_pos");
      Var i_hard = ce(enc_hard, out.hard, qi, "ce_i_hard");
      Var i_easy = ce(enc_easy, out.easy, qi, "ce_i_easy");
      lb.ce_i_pos = i_pos.scalar();
      lb.ce_i_hard = i_hard.scalar();
      lb.ce_i_easy = i_easy.scalar();
      Var ivc_i = ivc_hinges(i_pos, i_hard, i_easy, cfg.beta3, cfg.beta4);
      lb.l_ivc_i = ivc_i.scalar();
      ivc = ad::add(ivc, ivc_i);
      lb.rec_terms = 4;
      lb.l_rec = rec_loss(lb);
    } else {
      lb.l_rec = rec_loss_forward_only(lb);
    }
    lb.l_ivc = ivc_total(lb.l_ivc_f, lb.l_ivc_i);
    checked(ivc, "l_ivc");
    g.backward(ad::scale(ivc, inv_b));
    accumulate(gen_grads, gen_ctx.gradients());
    add_scaled(report.contrastive, lb, inv_b);
  }
  generator_opt_.step(gen_grads, cfg.grad_clip);
  report.phases.emplace_back("generator");
  if (on_optimizer_step) on_optimizer_step("generator");
  return report;
}

nlohmann::json to_json(const LossBundle& b) {
  return {{"ce_f_pos", b.ce_f_pos},   {"ce_i_pos", b.ce_i_pos},   {"ce_f_hard", b.ce_f_hard},
          {"ce_i_hard", b.ce_i_hard}, {"ce_f_easy", b.ce_f_easy}, {"ce_i_easy", b.ce_i_easy},
          {"l_rec", b.l_rec},         {"l_ivc_f", b.l_ivc_f},     {"l_ivc_i", b.l_ivc_i},
          {"l_ivc", b.l_ivc},         {"rec_terms", b.rec_terms}};
}

nlohmann::json to_json(const EpochRecord& r, const std::vector<double>& thresholds) {
  nlohmann::json j = {{"epoch", r.epoch},
                      {"steps", r.steps},
                      {"reconstruction", to_json(r.reconstruction)},
                      {"contrastive", to_json(r.contrastive)}};
  if (r.eval_rank1) {
    nlohmann::json e;
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      char key[32];
      std::snprintf(key, sizeof(key), "rank1_iou_%g", thresholds[i]);
      e[key] = (*r.eval_rank1)[i];
    }
    e["miou"] = *r.eval_miou;
    j["eval"] = e;
  }
  return j;
}

namespace {

void check_dimensions(const Model& model, const std::vector<Example>& set, const char* name) {
  const auto& c = model.config;
  for (const auto& ex : set) {
    if (ex.video.features.rows() != c.n_v || ex.video.features.cols() != c.d_v ||
        static_cast<int>(ex.query.ids.size()) != c.n_q ||
        ex.query.embeddings.cols() != c.d_w) {
      throw std::invalid_argument(std::string(name) + " example for video " + ex.video_id +
                                  " does not match the configured dimensions");
    }
    for (int id : ex.query.ids) {
      if (id < 0 || id >= c.vocab_size) {
        throw std::invalid_argument(std::string(name) + " example for video " + ex.video_id +
                                    " has a token id outside the vocabulary");
      }
    }
  }
}

void evaluate_into(const Model& model, const std::vector<Example>& eval,
                   const std::vector<double>& thresholds, EpochRecord& rec) {
  std::vector<Moment> preds, gts;
  for (const auto& ex : eval) {
    if (!ex.ground_truth) continue;
    preds.push_back(retrieve(model, ex, model.config.inference_strategy).top1);
    gts.push_back(*ex.ground_truth);
  }
  if (preds.empty()) return;
  const EvaluationReport r = evaluate(preds, gts, thresholds);
  rec.eval_rank1 = r.rank1;
  rec.eval_miou = r.miou;
}

std::string checkpoint_name(int epoch) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "checkpoint_epoch_%03d.mcck", epoch);
  return buf;
}

}  // namespace

TrainResult train(Model& model, const std::vector<Example>& train_set,
                  const TrainOptions& options) {
  if (train_set.empty()) throw std::invalid_argument("train: training split is empty");
  check_dimensions(model, train_set, "training");
  if (options.eval_set) check_dimensions(model, *options.eval_set, "evaluation");

  TrainResult result;
  std::ofstream log;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    log.open(options.out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write metrics log in " + options.out_dir.string());
    const fs::path ck = options.out_dir / checkpoint_name(0);
    save_checkpoint(ck, model, 0);
    result.checkpoints.push_back(ck);
  }

  Trainer trainer(model);
  std::mt19937_64 shuffle_rng(model.config.seed + 1);
  std::vector<const Example*> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = &train_set[i];
  const auto bs = static_cast<std::size_t>(model.config.batch_size);

  for (int epoch = 1; epoch <= model.config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(bs, order.size() - start);
      const StepReport step =
          trainer.train_step(std::span<const Example* const>(order.data() + start, n));
      const double w = static_cast<double>(n);
      add_scaled(rec.reconstruction, step.reconstruction, w);
      add_scaled(rec.contrastive, step.contrastive, w);
      seen += n;
      ++rec.steps;
    }
    const double inv = 1.0 / static_cast<double>(seen);
    LossBundle r{}, c{};
    add_scaled(r, rec.reconstruction, inv);
    add_scaled(c, rec.contrastive, inv);
    rec.reconstruction = r;
    rec.contrastive = c;
    if (options.eval_set) evaluate_into(model, *options.eval_set, options.eval_thresholds, rec);

    if (log.is_open()) {
      log << to_json(rec, options.eval_thresholds).dump() << '\n';
      log.flush();
      const fs::path ck = options.out_dir / checkpoint_name(epoch);
      save_checkpoint(ck, model, epoch);
      result.checkpoints.push_back(ck);
    }
    if (options.on_epoch) options.on_epoch(rec);
    result.epochs.push_back(std::move(rec));
  }
  return result;
}

}  // namespace mcmt
