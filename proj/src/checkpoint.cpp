#include "mcmt/checkpoint.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mcmt {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  std::uint32_t v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw std::runtime_error(what + ": truncated checkpoint");
  }
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& what) {
  const auto n = get_u32(in, what);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw std::runtime_error(what + ": truncated checkpoint");
  return s;
}

void put_array(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
  put_string(out, name);
  out.write(kFeatureMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const float f = static_cast<float>(m(i, j));
      out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
  }
}

Eigen::MatrixXd get_array(std::istream& in, std::string& name, const std::string& what) {
  name = get_string(in, what);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw std::runtime_error(what + ": section '" + name + "' has a bad array header");
  }
  const auto rows = get_u32(in, what);
  const auto cols = get_u32(in, what);
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < cols; ++j) {
      float f;
      if (!in.read(reinterpret_cast<char*>(&f), sizeof(f)))
        throw std::runtime_error(what + ": truncated section '" + name + "'");
      m(i, j) = f;
    }
  }
  return m;
}

}  // namespace

void save_checkpoint(const fs::path& path, const Model& model, int epoch) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(kCheckpointMagic, 4);
    put_u32(out, kCheckpointVersion);
    nlohmann::json header = {
        {"config", to_json(model.config)},
        {"fingerprint", model.config.fingerprint()},
        {"vocab", model.vocab.tokens()},
        {"epoch", epoch},
    };
    put_string(out, header.dump());
    const auto gen = model.generator.params().all();
    const auto rec = model.reconstructor.params().all();
    put_u32(out, static_cast<std::uint32_t>(1 + gen.size() + rec.size()));
    put_array(out, "embeddings", model.embeddings);
    for (const auto* p : gen) put_array(out, p->name, p->value);
    for (const auto* p : rec) put_array(out, p->name, p->value);
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::string what = "checkpoint " + path.string();
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw std::runtime_error(what + ": bad magic");
  }
  const auto version = get_u32(in, what);
  if (version != kCheckpointVersion) {
    throw std::runtime_error(what + ": unsupported version " + std::to_string(version));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(get_string(in, what));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(what + ": corrupt header: " + e.what());
  }
  const TrainConfig config = from_json(header.at("config"));
  const std::string fingerprint = header.at("fingerprint").get<std::string>();
  if (config.fingerprint() != fingerprint) {
    throw std::runtime_error(what + ": stored fingerprint does not match stored config");
  }
  Vocab vocab(header.at("vocab").get<std::vector<std::string>>());

  const auto sections = get_u32(in, what);
  std::string name;
  Eigen::MatrixXd embeddings = get_array(in, name, what);
  if (name != "embeddings") throw std::runtime_error(what + ": first section must be embeddings");

  LoadedCheckpoint out;
  out.model = std::make_unique<Model>(config, std::move(vocab), std::move(embeddings));
  out.epoch = header.value("epoch", 0);
  out.fingerprint = fingerprint;
  std::size_t expected = 1 + out.model->generator.params().all().size() +
                         out.model->reconstructor.params().all().size();
  if (sections != expected) {
    throw std::runtime_error(what + ": expected " + std::to_string(expected) +
                             " sections, found " + std::to_string(sections));
  }
  for (std::uint32_t s = 1; s < sections; ++s) {
    Eigen::MatrixXd m = get_array(in, name, what);
    nn::ParameterStore& store = name.rfind("gen.", 0) == 0 ? out.model->generator.params()
                                                            : out.model->reconstructor.params();
    if (!store.contains(name)) throw std::runtime_error(what + ": unknown section '" + name + "'");
    auto& p = store.get(name);
    if (p.value.rows() != m.rows() || p.value.cols() != m.cols()) {
      throw std::runtime_error(what + ": section '" + name + "' has the wrong shape");
    }
    p.value = std::move(m);
  }
  return out;
}

void check_fingerprint(const TrainConfig& config, const std::string& checkpoint_fingerprint) {
  if (config.fingerprint() != checkpoint_fingerprint) {
    throw std::invalid_argument("config fingerprint " + config.fingerprint() +
                                " does not match checkpoint fingerprint " +
                                checkpoint_fingerprint);
  }
}

}  // namespace mcmt
