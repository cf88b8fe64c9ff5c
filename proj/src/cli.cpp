#include "mcmt/cli.hpp"

#include "CLI11.hpp"
#include "json.hpp"
#include "mcmt/checkpoint.hpp"
#include "mcmt/inference.hpp"
#include "mcmt/metrics.hpp"
#include "mcmt/synthetic.hpp"
#include "mcmt/trainer.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace mcmt {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::string profile_name;
  std::optional<std::uint64_t> seed;
  std::string strategy;
  std::string data_dir;
};

std::string default_data_dir() {
  const char* env = std::getenv("MCMT_DATA_DIR");
  return env ? env : "data";
}

// Profile first, then the config file, then --seed / --strategy.
TrainConfig effective_config(const GlobalOptions& g, const std::string& fallback_profile) {
  TrainConfig c = profile(g.profile_name.empty() ? fallback_profile : g.profile_name);
  if (!g.config_path.empty()) {
    if (!fs::exists(g.config_path)) {
      throw std::runtime_error("config file not found: " + g.config_path);
    }
    c = load_config(g.config_path, c);
  }
  if (g.seed) c.seed = *g.seed;
  if (!g.strategy.empty()) c.inference_strategy = parse_strategy(g.strategy);
  c.validate();
  return c;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::optional<double> lookup_duration(const fs::path& data_dir, const std::string& video_id) {
  const fs::path manifest = data_dir / "manifest.jsonl";
  if (!fs::exists(manifest)) return std::nullopt;
  for (const auto& r : load_manifest(manifest).records) {
    if (r.video_id == video_id) return r.duration;
  }
  return std::nullopt;
}

Example example_for(const Model& model, const fs::path& data_dir, const std::string& video_id,
                    const std::string& query, std::optional<double> duration) {
  if (!duration) duration = lookup_duration(data_dir, video_id);
  if (!duration) {
    throw std::runtime_error("unknown video " + video_id +
                             " (not in manifest; pass --duration to override)");
  }
  const FeatureMatrix raw = load_clip_features(data_dir / "features", video_id, model.config.d_v);
  return model.make_example(video_id, query, raw, *duration);
}

int cmd_synth(const GlobalOptions& g, const SyntheticConfig& sc, const std::string& out_dir,
              std::ostream& out) {
  const fs::path dir = out_dir.empty() ? fs::path(g.data_dir) : fs::path(out_dir);
  const std::uint64_t seed = g.seed.value_or(7);
  const SyntheticDataset ds = generate_synthetic_dataset(sc, seed);
  write_synthetic_dataset(ds, dir);
  out << "wrote " << ds.manifest.records.size() << " records to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const GlobalOptions& g, const std::string& out_dir, std::optional<int> epochs,
              std::ostream& out, std::ostream& err) {
  TrainConfig cfg = effective_config(g, "synthetic");
  if (epochs) cfg.epochs = *epochs;
  cfg.validate();
  const fs::path data(g.data_dir);
  const DatasetManifest manifest = load_manifest(data / "manifest.jsonl");
  for (const auto& w : manifest.warnings) err << "warning: " << w << "\n";
  Model model = build_model(cfg, manifest, data / "embeddings.txt");
  const auto train_set = model.load_examples(manifest, true, data / "features");
  std::vector<Example> eval_set;
  for (auto& ex : model.load_examples(manifest, false, data / "features")) {
    if (ex.ground_truth) eval_set.push_back(std::move(ex));
  }

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    std::ofstream cf(dir / "config.json");
    cf << to_json(cfg).dump(2) << "\n";
  }
  out << "effective config:\n" << to_json(cfg).dump(2) << "\n";

  TrainOptions opts;
  opts.out_dir = dir;
  if (!eval_set.empty()) opts.eval_set = &eval_set;
  opts.on_epoch = [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " l_rec " << fmt(r.reconstruction.l_rec) << " l_ivc "
        << fmt(r.contrastive.l_ivc);
    if (r.eval_rank1) {
      out << " R@1(0.3/0.5/0.7) " << fmt((*r.eval_rank1)[0]) << "/" << fmt((*r.eval_rank1)[1])
          << "/" << fmt((*r.eval_rank1)[2]) << " mIoU " << fmt(*r.eval_miou);
    }
    out << "\n" << std::flush;
  };
  const TrainResult result = train(model, train_set, opts);
  out << "checkpoints: " << result.checkpoints.size() << ", last "
      << result.checkpoints.back().string() << "\n";
  return 0;
}

std::vector<double> parse_thresholds(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::invalid_argument("no IoU thresholds given");
  return out;
}

int cmd_eval(const GlobalOptions& g, const std::string& checkpoint, std::string manifest_path,
             const std::string& thresholds, std::string predictions_path, std::ostream& out,
             std::ostream& err) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  Model& model = *ck.model;
  if (!g.config_path.empty() || !g.profile_name.empty()) {
    check_fingerprint(effective_config(g, "synthetic"), ck.fingerprint);
  }
  const InferenceStrategy strategy =
      g.strategy.empty() ? model.config.inference_strategy : parse_strategy(g.strategy);
  const fs::path data(g.data_dir);
  if (manifest_path.empty()) manifest_path = (data / "manifest.jsonl").string();
  const DatasetManifest manifest = load_manifest(manifest_path);
  for (const auto& w : manifest.warnings) err << "warning: " << w << "\n";
  const auto records = manifest.split(false);
  if (records.empty()) throw std::runtime_error("manifest has no evaluation records");
  for (const auto* r : records) {
    if (!r->ground_truth) {
      throw std::runtime_error("evaluation record for video " + r->video_id +
                               " lacks ground truth (start/end)");
    }
  }
  if (predictions_path.empty()) predictions_path = "predictions.jsonl";
  std::ofstream dump(predictions_path, std::ios::binary);
  if (!dump) throw std::runtime_error("cannot write predictions to " + predictions_path);

  std::vector<Moment> preds, gts;
  for (const auto* r : records) {
    const FeatureMatrix raw = load_clip_features(data / "features", r->video_id, model.config.d_v);
    const Example ex = model.make_example(r->video_id, r->query, raw, r->duration, r->ground_truth);
    const Retrieval ret = retrieve(model, ex, strategy);
    preds.push_back(ret.top1);
    gts.push_back(*r->ground_truth);
    nlohmann::ordered_json j;
    j["video_id"] = r->video_id;
    j["query"] = r->query;
    j["start"] = ret.top1.start;
    j["end"] = ret.top1.end;
    j["strategy"] = to_string(strategy);
    j["k"] = model.config.effective_k();
    dump << j.dump() << "\n";
  }
  const EvaluationReport rep = evaluate(preds, gts, parse_thresholds(thresholds));
  out << format_report(rep, "MCMT(" + to_string(strategy) + ")");
  out << "queries: " << rep.queries << ", predictions: " << predictions_path << "\n";
  return 0;
}

int cmd_infer(const GlobalOptions& g, const std::string& checkpoint, const std::string& video_id,
              const std::string& query, std::optional<double> duration, std::ostream& out) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const InferenceStrategy strategy =
      g.strategy.empty() ? ck.model->config.inference_strategy : parse_strategy(g.strategy);
  const Example ex = example_for(*ck.model, g.data_dir, video_id, query, duration);
  const Retrieval r = retrieve(*ck.model, ex, strategy);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f %.4f\n", r.top1.start, r.top1.end);
  out << buf;
  return 0;
}

int cmd_inspect(const GlobalOptions& g, const std::string& checkpoint,
                const std::string& video_id, const std::string& query,
                std::optional<double> duration, const std::string& out_path, std::ostream& out) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const Model& model = *ck.model;
  const Example ex = example_for(model, g.data_dir, video_id, query, duration);
  ad::Graph graph;
  nn::Context ctx(graph, false);
  const GeneratorOutput o = model.generator.forward(ctx, ex.video, ex.query, &ex.inverse);
  const auto& masks = o.masks.value();
  const auto& pos = o.positive.value();
  const auto& easy = o.easy.value();
  const auto& beta = o.aggregation.value();

  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out_path);
  char buf[32];
  f << "clip time";
  for (Eigen::Index i = 0; i < masks.rows(); ++i) f << " mask_" << i;
  f << " positive easy\n";
  for (Eigen::Index j = 0; j < masks.cols(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.6f", static_cast<double>(j + 1) / masks.cols());
    f << j << ' ' << buf;
    for (Eigen::Index i = 0; i < masks.rows(); ++i) {
      std::snprintf(buf, sizeof(buf), " %.8f", masks(i, j));
      f << buf;
    }
    std::snprintf(buf, sizeof(buf), " %.8f", pos(0, j));
    f << buf;
    std::snprintf(buf, sizeof(buf), " %.8f", easy(0, j));
    f << buf << "\n";
  }
  f << "beta";
  for (Eigen::Index i = 0; i < beta.cols(); ++i) {
    std::snprintf(buf, sizeof(buf), " %.8f", beta(0, i));
    f << buf;
  }
  f << "\n";
  out << "wrote " << masks.rows() << " masks over " << masks.cols() << " clips to " << out_path
      << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weakly-supervised video moment retrieval with multi-proposal Gaussian masks"};
  app.require_subcommand(1);
  GlobalOptions g;
  g.data_dir = default_data_dir();
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "JSON config file (keys mirror TrainConfig)");
  app.add_option("--profile", g.profile_name, "Built-in hyperparameter profile")
      ->check(CLI::IsMember({"charades", "activitynet", "synthetic"}));
  auto* seed_opt = app.add_option("--seed", seed_value, "Random seed");
  app.add_option("--strategy", g.strategy, "Top-1 selection strategy")
      ->check(CLI::IsMember({"vote", "attn"}));
  app.add_option("--data-dir", g.data_dir, "Dataset directory (default $MCMT_DATA_DIR or ./data)");

  // synth
  SyntheticConfig sc;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a planted-moment synthetic dataset");
  synth->add_option("--out", synth_out, "Output directory (default: data dir)");
  synth->add_option("--n-train", sc.n_train, "Training videos");
  synth->add_option("--n-test", sc.n_test, "Test videos");
  synth->add_option("--n-v", sc.n_v, "Nominal clip count");
  synth->add_option("--d-v", sc.d_v, "Clip feature width");
  synth->add_option("--d-w", sc.d_w, "Word embedding width");
  synth->add_option("--vocab-size", sc.vocab_size, "Vocabulary size incl. reserved tokens");
  synth->add_option("--sigma", sc.sigma, "Noise amplitude inside the moment");
  synth->add_option("--background-scale", sc.background_scale, "Noise amplitude outside the moment");
  synth->add_option("--distractors", sc.distractors, "Other-signature events per video");
  synth->add_option("--moment-frac-min", sc.moment_frac_min, "Shortest moment (fraction)");
  synth->add_option("--moment-frac-max", sc.moment_frac_max, "Longest moment (fraction)");

  // train
  std::string train_out = "runs/latest";
  std::optional<int> epochs;
  auto* train_cmd = app.add_subcommand("train", "Train generator and reconstructor");
  train_cmd->add_option("--out", train_out, "Output directory for checkpoints and logs");
  train_cmd->add_option("--epochs", epochs, "Override the epoch count");

  // eval
  std::string checkpoint, manifest_path, thresholds = "0.3,0.5,0.7", predictions;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on the evaluation split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--manifest", manifest_path, "Manifest (default: data dir manifest)");
  eval->add_option("--thresholds", thresholds, "Comma-separated IoU thresholds");
  eval->add_option("--predictions", predictions, "Prediction dump path (JSONL)");

  // infer
  std::string video_id, query;
  std::optional<double> duration;
  auto* infer = app.add_subcommand("infer", "Retrieve the moment for one query");
  infer->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  infer->add_option("--video-id", video_id, "Video id")->required();
  infer->add_option("--query", query, "Query sentence")->required();
  infer->add_option("--duration", duration, "Video duration in seconds");

  // inspect-masks
  std::string curves_out = "masks.txt";
  auto* inspect = app.add_subcommand("inspect-masks", "Dump Gaussian, positive and easy masks");
  inspect->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  inspect->add_option("--video-id", video_id, "Video id")->required();
  inspect->add_option("--query", query, "Query sentence")->required();
  inspect->add_option("--duration", duration, "Video duration in seconds");
  inspect->add_option("--out", curves_out, "Output text file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  if (seed_opt->count()) g.seed = seed_value;

  try {
    if (synth->parsed()) return cmd_synth(g, sc, synth_out, out);
    if (train_cmd->parsed()) return cmd_train(g, train_out, epochs, out, err);
    if (eval->parsed()) return cmd_eval(g, checkpoint, manifest_path, thresholds, predictions, out, err);
    if (infer->parsed()) return cmd_infer(g, checkpoint, video_id, query, duration, out);
    if (inspect->parsed())
      return cmd_inspect(g, checkpoint, video_id, query, duration, curves_out, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace mcmt
