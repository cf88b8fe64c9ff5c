#pragma once
// Small fixtures shared by the unit tests and the acceptance runner.

#include "mcmt/model.hpp"
#include "mcmt/objectives.hpp"
#include "mcmt/reconstructor.hpp"
#include "mcmt/synthetic.hpp"

#include <filesystem>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>

namespace mcmt::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mcmt_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Small architecture for fast tests: n_v=8, k=2, n_q=5, d_h=16.
inline TrainConfig tiny_config() {
  TrainConfig c = profile("synthetic");
  c.n_v = 8;
  c.n_q = 5;
  c.d_v = 4;
  c.d_w = 4;
  c.d_h = 16;
  c.k = 2;
  c.batch_size = 4;
  c.epochs = 1;
  return c;
}

inline SyntheticConfig tiny_synthetic(const TrainConfig& c, int n_train = 8, int n_test = 4) {
  SyntheticConfig s;
  s.n_train = n_train;
  s.n_test = n_test;
  s.n_v = c.n_v;
  s.raw_len_min = c.n_v;
  s.raw_len_max = 2 * c.n_v;
  s.d_v = c.d_v;
  s.d_w = c.d_w;
  s.vocab_size = c.vocab_size;
  s.query_len_min = 3;
  s.query_len_max = c.n_q;
  return s;
}

/// A written synthetic dataset, a freshly initialized model and its examples.
struct World {
  std::unique_ptr<TempDir> dir;
  DatasetManifest manifest;
  std::unique_ptr<Model> model;
  std::vector<Example> train;
  std::vector<Example> test;
};

inline World make_world(const TrainConfig& cfg, const std::string& tag, int n_train = 8,
                        int n_test = 4, std::uint64_t data_seed = 11) {
  World w;
  w.dir = std::make_unique<TempDir>(tag);
  const auto ds = generate_synthetic_dataset(tiny_synthetic(cfg, n_train, n_test), data_seed);
  write_synthetic_dataset(ds, w.dir->path());
  w.manifest = load_manifest(w.dir->path() / "manifest.jsonl");
  w.model = std::make_unique<Model>(
      build_model(cfg, w.manifest, w.dir->path() / "embeddings.txt"));
  w.train = w.model->load_examples(w.manifest, true, w.dir->path() / "features");
  w.test = w.model->load_examples(w.manifest, false, w.dir->path() / "features");
  return w;
}

/// Contrastive loss as a function of explicit proposal centers and widths (k x 1 each),
/// routed through aggregation and the full reconstructor. Both networks are
/// frozen; only `centers` and `widths` carry gradients.
inline ad::Var ivc_from_proposals(ad::Graph& g, const Model& model, const Example& ex,
                                  const ad::Var& centers, const ad::Var& widths,
                                  const MaskedQuery& fwd, const MaskedQuery* inv) {
  const TrainConfig& cfg = model.config;
  nn::Context gen_ctx(g, false);
  nn::Context rec_ctx(g, false);
  const ad::Var masks = ad::gaussian_masks(centers, widths, cfg.n_v, cfg.alpha, cfg.width_floor);
  const ad::Var positive = model.generator.aggregate(gen_ctx, masks).first;
  const ad::Var ones = g.constant(Eigen::MatrixXd::Ones(1, cfg.n_v));
  const ad::Var easy = ad::sub(ones, positive);
  const ad::Var video = g.constant(ex.video.features);
  const auto& rec = model.reconstructor;
  const ad::Var enc_p = rec.encode(rec_ctx, video, positive);
  const ad::Var enc_h = rec.encode(rec_ctx, video, ones);
  const ad::Var enc_e = rec.encode(rec_ctx, video, easy);
  auto hinge = [&](const MaskedQuery& q, double lo, double hi) {
    return ivc_hinges(rec.reconstruction_loss(rec_ctx, enc_p, positive, q),
                      rec.reconstruction_loss(rec_ctx, enc_h, ones, q),
                      rec.reconstruction_loss(rec_ctx, enc_e, easy, q), lo, hi);
  };
  ad::Var total = hinge(fwd, cfg.beta1, cfg.beta2);
  if (inv) total = ad::add(total, hinge(*inv, cfg.beta3, cfg.beta4));
  return total;
}

}  // namespace mcmt::testing
