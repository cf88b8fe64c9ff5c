#include "doctest.h"
#include "mcmt/dataio.hpp"
#include "mcmt/synthetic.hpp"
#include "support.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

using namespace mcmt;
using mcmt::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string what_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

DatasetManifest manifest_of(std::vector<std::string> queries) {
  DatasetManifest m;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    m.records.push_back({"v" + std::to_string(i), 10.0, queries[i], "train", std::nullopt});
  }
  return m;
}

}  // namespace

TEST_CASE("load_manifest parses train and eval records") {
  TempDir dir("manifest");
  write_text(dir.path() / "m.jsonl",
             "{\"video_id\":\"a\",\"duration\":30,\"query\":\"a man runs\",\"split\":\"train\"}\n"
             "{\"video_id\":\"b\",\"duration\":40,\"query\":\"a dog\",\"split\":\"test\",\"start\":1,\"end\":5}\n"
             "\n"
             "{\"video_id\":\"c\",\"duration\":50,\"query\":\"cat\",\"start\":0,\"end\":50}\n");
  const auto m = load_manifest(dir.path() / "m.jsonl");
  REQUIRE(m.records.size() == 3);
  CHECK(m.records[0].is_train());
  CHECK_FALSE(m.records[0].ground_truth);
  CHECK(m.records[1].ground_truth->start == 1.0);
  CHECK(m.records[2].split == "test");
  CHECK(m.split(true).size() == 1);
  CHECK(m.split(false).size() == 2);
  CHECK(m.warnings.empty());
}

TEST_CASE("load_manifest rejects a reversed moment and names the record") {
  TempDir dir("manifest_bad");
  write_text(dir.path() / "m.jsonl",
             "{\"video_id\":\"ok\",\"duration\":30,\"query\":\"x\"}\n"
             "{\"video_id\":\"vid42\",\"duration\":30,\"query\":\"x\",\"start\":9,\"end\":3}\n");
  const std::string msg = what_of([&] { load_manifest(dir.path() / "m.jsonl"); });
  CHECK(msg.find("vid42") != std::string::npos);
  CHECK(msg.find("line 2") != std::string::npos);
}

TEST_CASE("load_manifest reports parse errors with the line number") {
  TempDir dir("manifest_parse");
  write_text(dir.path() / "m.jsonl", "{\"video_id\":\"ok\",\"duration\":30,\"query\":\"x\"}\n{oops\n");
  CHECK(what_of([&] { load_manifest(dir.path() / "m.jsonl"); }).find("line 2") != std::string::npos);
}

TEST_CASE("empty manifest yields a warning") {
  TempDir dir("manifest_empty");
  write_text(dir.path() / "m.jsonl", "");
  const auto m = load_manifest(dir.path() / "m.jsonl");
  CHECK(m.records.empty());
  CHECK(m.warnings.size() == 1);
}

TEST_CASE("manifest round trip") {
  TempDir dir("manifest_rt");
  DatasetManifest m;
  m.records.push_back({"a", 12.5, "hello there", "train", std::nullopt});
  m.records.push_back({"b", 20.0, "x", "val", Moment{2.0, 4.5}});
  write_manifest(m, dir.path() / "m.jsonl");
  const auto back = load_manifest(dir.path() / "m.jsonl");
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[1].split == "val");
  CHECK(back.records[1].ground_truth->end == 4.5);
  CHECK(back.records[0].query == "hello there");
}

TEST_CASE("clip feature files") {
  TempDir dir("features");
  FeatureMatrix m(57, 12);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.25 * static_cast<double>(i % 17) - 1.0;
  write_feature_file(feature_path(dir.path(), "vid"), m);
  const auto back = load_clip_features(dir.path(), "vid", 12);
  CHECK(back.rows() == 57);
  CHECK(back.cols() == 12);
  CHECK((back - m).cwiseAbs().maxCoeff() == 0.0);

  CHECK(what_of([&] { load_clip_features(dir.path(), "vid", 300); }).find("width") != std::string::npos);
  CHECK(what_of([&] { load_clip_features(dir.path(), "nope", 12); }).find("missing") != std::string::npos);

  m(31, 4) = std::numeric_limits<double>::quiet_NaN();
  write_feature_file(feature_path(dir.path(), "nan"), m);
  CHECK(what_of([&] { load_clip_features(dir.path(), "nan", 12); }).find("row 31") != std::string::npos);
}

TEST_CASE("feature file header layout") {
  TempDir dir("features_layout");
  FeatureMatrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  write_feature_file(dir.path() / "x.mcft", m);
  const std::string bytes = slurp(dir.path() / "x.mcft");
  REQUIRE(bytes.size() == 12 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "MCFT");
  CHECK(static_cast<unsigned char>(bytes[4]) == 2);
  CHECK(static_cast<unsigned char>(bytes[8]) == 3);
  float last = 0;
  std::memcpy(&last, bytes.data() + 12 + 5 * 4, 4);
  CHECK(last == 6.0f);
}

TEST_CASE("sample_clips index rule") {
  FeatureMatrix raw(3, 1);
  raw << 0, 1, 2;
  const auto s = sample_clips(raw, 6);
  REQUIRE(s.features.rows() == 6);
  const std::vector<double> expect = {0, 0, 1, 1, 2, 2};
  for (int j = 0; j < 6; ++j) CHECK(s.features(j, 0) == expect[j]);

  FeatureMatrix same(8, 2);
  same.setRandom();
  CHECK((sample_clips(same, 8).features - same).cwiseAbs().maxCoeff() == 0.0);
  const auto once = sample_clips(same, 8).features;
  CHECK((sample_clips(once, 8).features - once).cwiseAbs().maxCoeff() == 0.0);

  FeatureMatrix twice(16, 1);
  for (int i = 0; i < 16; ++i) twice(i, 0) = i;
  const auto half = sample_clips(twice, 8);
  for (int j = 0; j < 8; ++j) CHECK(half.features(j, 0) == 2 * j);
}

TEST_CASE("build_vocab keeps frequent tokens with a lexicographic tie-break") {
  const auto small = build_vocab(manifest_of({"alpha beta gamma delta epsilon", "zeta eta theta iota kappa"}), 50);
  CHECK(small.size() == 10 + Vocab::kReserved);

  // "b" and "c" tie on count; only one slot remains after "a".
  const auto v = build_vocab(manifest_of({"a a a b c", "a b c"}), Vocab::kReserved + 2);
  CHECK(v.contains("a"));
  CHECK(v.contains("b"));
  CHECK_FALSE(v.contains("c"));
  CHECK_THROWS_AS(build_vocab(manifest_of({"a"}), 3), std::invalid_argument);
}

TEST_CASE("build_vocab is deterministic and flags content words") {
  const auto m = manifest_of({"the man opens a door", "a woman opens the window"});
  const auto a = build_vocab(m, 50), b = build_vocab(m, 50);
  CHECK(a.tokens() == b.tokens());
  CHECK(a.is_content(a.id("door")));
  CHECK_FALSE(a.is_content(a.id("the")));
  CHECK_FALSE(a.is_content(Vocab::kPad));
}

TEST_CASE("tokenize pads, truncates and maps unknowns") {
  const auto vocab = build_vocab(manifest_of({"a man runs fast"}), 50);
  EmbeddingTable table = EmbeddingTable::Ones(vocab.size(), 3);
  table.row(Vocab::kPad).setZero();
  const auto q = tokenize("A man, runs!", vocab, 5, table);
  CHECK(q.valid_len == 3);
  CHECK(q.ids[3] == Vocab::kPad);
  CHECK(q.ids[4] == Vocab::kPad);
  CHECK(q.embeddings.row(4).norm() == 0.0);
  CHECK(vocab.token(q.ids[1]) == "man");

  std::string long_text;
  for (int i = 0; i < 25; ++i) long_text += "man ";
  CHECK(tokenize(long_text, vocab, 20, table).valid_len == 20);

  const auto u = tokenize("a zebra runs", vocab, 5, table);
  CHECK(u.ids[1] == Vocab::kUnk);
}

TEST_CASE("load_embedding_table") {
  TempDir dir("emb");
  const auto vocab = build_vocab(manifest_of({"cat dog bird"}), 50);
  write_text(dir.path() / "e.txt", "cat 1 2 3\ndog 0.5 -0.5 0.25\nunused 9 9 9\n");
  const auto t1 = load_embedding_table(dir.path() / "e.txt", vocab, 3, 42);
  CHECK(t1(vocab.id("cat"), 1) == 2.0);
  CHECK(t1(vocab.id("dog"), 2) == 0.25);
  CHECK(t1.row(Vocab::kPad).norm() == 0.0);
  const auto t2 = load_embedding_table(dir.path() / "e.txt", vocab, 3, 42);
  CHECK(t1.row(vocab.id("bird")) == t2.row(vocab.id("bird")));
  CHECK(t1.row(vocab.id("bird")).norm() > 0.0);
  CHECK(t1.row(vocab.id("bird")).cwiseAbs().maxCoeff() < 1.0);

  write_text(dir.path() / "bad_dim.txt", "cat 1 2\n");
  CHECK_THROWS(load_embedding_table(dir.path() / "bad_dim.txt", vocab, 3));
  write_text(dir.path() / "bad_num.txt", "cat 1 x 3\n");
  CHECK_THROWS(load_embedding_table(dir.path() / "bad_num.txt", vocab, 3));
}

TEST_CASE("synthetic generator is deterministic") {
  SyntheticConfig c;
  c.n_train = 20;
  c.n_test = 5;
  TempDir a("syn_a"), b("syn_b");
  write_synthetic_dataset(generate_synthetic_dataset(c, 9), a.path());
  write_synthetic_dataset(generate_synthetic_dataset(c, 9), b.path());
  CHECK(slurp(a.path() / "manifest.jsonl") == slurp(b.path() / "manifest.jsonl"));
  CHECK(slurp(a.path() / "embeddings.txt") == slurp(b.path() / "embeddings.txt"));
  CHECK(slurp(feature_path(a.path() / "features", "syn00003")) ==
        slurp(feature_path(b.path() / "features", "syn00003")));
}

TEST_CASE("synthetic generator plants the signature") {
  SyntheticConfig c;
  c.n_train = 500;
  c.n_test = 0;
  c.sigma = 0.0;
  const auto ds = generate_synthetic_dataset(c, 1);
  CHECK(ds.manifest.records.size() == 500);
  for (std::size_t r = 0; r < 10; ++r) {
    const auto& raw = ds.features.at(ds.manifest.records[r].video_id);
    const auto [b, e] = ds.moment_rows[r];
    const Eigen::RowVectorXd sig = ds.signatures.row(ds.video_signature[r]);
    for (int i = b; i < e; ++i) CHECK((raw.row(i) - sig).cwiseAbs().maxCoeff() == 0.0);
    const auto& gt = *ds.manifest.records[r].ground_truth;
    const double d = ds.manifest.records[r].duration;
    CHECK(gt.start == doctest::Approx(d * b / raw.rows()));
    CHECK(gt.end == doctest::Approx(d * e / raw.rows()));
  }
}

TEST_CASE("synthetic moment clips resemble their signature") {
  SyntheticConfig c;
  c.n_train = 50;
  c.n_test = 0;
  const auto ds = generate_synthetic_dataset(c, 2);
  int wins = 0;
  for (std::size_t r = 0; r < ds.manifest.records.size(); ++r) {
    const auto& raw = ds.features.at(ds.manifest.records[r].video_id);
    const auto [b, e] = ds.moment_rows[r];
    const Eigen::RowVectorXd sig = ds.signatures.row(ds.video_signature[r]);
    const Eigen::RowVectorXd in = raw.middleRows(b, e - b).colwise().mean();
    Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(raw.cols());
    for (int i = 0; i < raw.rows(); ++i)
      if (i < b || i >= e) out += raw.row(i);
    out /= static_cast<double>(raw.rows() - (e - b));
    const double cin = in.dot(sig) / (in.norm() * sig.norm());
    const double cout = out.dot(sig) / (out.norm() * sig.norm());
    wins += cin > cout;
  }
  CHECK(wins == static_cast<int>(ds.manifest.records.size()));
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig c;
  c.moment_frac_max = 1.5;
  CHECK_THROWS_AS(generate_synthetic_dataset(c, 1), std::invalid_argument);
  SyntheticConfig v;
  v.vocab_size = 20;
  CHECK_THROWS_AS(generate_synthetic_dataset(v, 1), std::invalid_argument);
}
