#include <cstring>
#include <fstream>

#include "engage/error.hpp"
#include "engage/model.hpp"
#include "serialize.hpp"

namespace engage {
namespace detail {

using nlohmann::json;

json to_json(const models::ModelConfig& c) {
  return {
      {"mode", std::string(models::to_string(c.mode))},
      {"backbone", std::string(models::to_string(c.backbone))},
      {"head", std::string(models::to_string(c.head))},
      {"num_classes", c.num_classes},
      {"latent_dim", c.latent_dim},
      {"affect_dim", c.affect_dim},
      {"behavioral_dim", c.behavioral_dim},
      {"clip_dim", c.clip_dim},
      {"reducer_hidden", c.reducer_hidden},
      {"reducer_out", c.reducer_out},
      {"lstm_hidden1", c.lstm_hidden1},
      {"lstm_hidden2", c.lstm_hidden2},
      {"tcn",
       {{"levels", c.tcn.levels},
        {"hidden", c.tcn.hidden},
        {"kernel", c.tcn.kernel},
        {"dropout", c.tcn.dropout}}},
      {"seed", c.seed},
  };
}

models::ModelConfig model_config_from_json(const json& j) {
  models::ModelConfig c;
  c.mode = models::parse_input_mode(j.at("mode").get<std::string>());
  c.backbone = models::parse_backbone(j.at("backbone").get<std::string>());
  c.head = models::parse_head(j.at("head").get<std::string>());
  c.num_classes = j.at("num_classes").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.affect_dim = j.at("affect_dim").get<int>();
  c.behavioral_dim = j.at("behavioral_dim").get<int>();
  c.clip_dim = j.at("clip_dim").get<int>();
  c.reducer_hidden = j.at("reducer_hidden").get<int>();
  c.reducer_out = j.at("reducer_out").get<int>();
  c.lstm_hidden1 = j.at("lstm_hidden1").get<int>();
  c.lstm_hidden2 = j.at("lstm_hidden2").get<int>();
  const auto& t = j.at("tcn");
  c.tcn.levels = t.at("levels").get<int>();
  c.tcn.hidden = t.at("hidden").get<int>();
  c.tcn.kernel = t.at("kernel").get<int>();
  c.tcn.dropout = t.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json to_json(const features::Normalizer& n) {
  return {{"layout_version", n.layout_version},
          {"mean", n.mean},
          {"stddev", n.stddev},
          {"constant", n.constant}};
}

features::Normalizer normalizer_from_json(const json& j) {
  features::Normalizer n;
  n.layout_version = j.at("layout_version").get<std::string>();
  n.mean = j.at("mean").get<std::vector<double>>();
  n.stddev = j.at("stddev").get<std::vector<double>>();
  n.constant = j.at("constant").get<std::vector<bool>>();
  if (n.stddev.size() != n.mean.size() || n.constant.size() != n.mean.size()) {
    throw Error(ErrorCode::kCorruptCheckpoint, "normalizer vectors differ in length");
  }
  return n;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return json::parse(in);
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::uint64_t fnv1a(const void* data, std::size_t size) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

namespace models {
namespace {

constexpr char kBlobMagic[8] = {'E', 'N', 'G', 'P', 'A', 'R', 'A', 'M'};
constexpr const char* kMetaFile = "meta.json";
constexpr const char* kBlobFile = "params.bin";

std::pair<int, int> parse_version(const std::string& v) {
  const auto dot = v.find('.');
  try {
    if (dot == std::string::npos) return {std::stoi(v), 0};
    return {std::stoi(v.substr(0, dot)), std::stoi(v.substr(dot + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::kCorruptCheckpoint, "bad format version '" + v + "'");
  }
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<double> blob;
  nlohmann::json table = nlohmann::json::array();
  for (const auto* p : model.parameters()) {
    table.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
    blob.insert(blob.end(), p->value.data(), p->value.data() + p->value.size());
  }
  const std::size_t bytes = blob.size() * sizeof(double);

  nlohmann::json meta;
  meta["format"] = "engage-checkpoint";
  meta["version"] = std::to_string(kCheckpointMajor) + "." + std::to_string(kCheckpointMinor);
  meta["layout_version"] = model.config().layout_version();
  meta["seed"] = model.config().seed;
  meta["config"] = detail::to_json(model.config());
  meta["normalizer"] = model.normalizer() ? detail::to_json(*model.normalizer()) : nlohmann::json(nullptr);
  meta["parameters"] = std::move(table);
  meta["blob_bytes"] = bytes;
  meta["blob_checksum"] = detail::fnv1a(blob.data(), bytes);

  {
    std::ofstream out(dir / kBlobFile, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / kBlobFile).string());
    out.write(kBlobMagic, sizeof(kBlobMagic));
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(bytes));
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + (dir / kBlobFile).string());
  }
  detail::write_json_file(dir / kMetaFile, meta);
}

Model load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / kMetaFile)) {
    throw Error(ErrorCode::kMissingCheckpoint, "no checkpoint at " + dir.string());
  }
  nlohmann::json meta;
  try {
    meta = detail::read_json_file(dir / kMetaFile);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, std::string("metadata: ") + e.what());
  }

  try {
    if (meta.value("format", "") != "engage-checkpoint") {
      throw Error(ErrorCode::kCorruptCheckpoint, "not an engage checkpoint");
    }
    const auto [major, minor] = parse_version(meta.at("version").get<std::string>());
    if (major != kCheckpointMajor) {
      throw Error(ErrorCode::kVersionMismatch,
                  "checkpoint format major " + std::to_string(major) + " unsupported");
    }
    (void)minor;

    const auto config = detail::model_config_from_json(meta.at("config"));
    const auto layout = meta.at("layout_version").get<std::string>();
    if (layout != config.layout_version()) {
      throw Error(ErrorCode::kVersionMismatch, "feature layout '" + layout + "' != expected '" +
                                                   config.layout_version() + "'");
    }
    Model model(config);
    if (!meta.at("normalizer").is_null()) {
      auto n = detail::normalizer_from_json(meta.at("normalizer"));
      if (n.layout_version != layout) {
        throw Error(ErrorCode::kVersionMismatch, "normalizer layout '" + n.layout_version + "'");
      }
      model.set_normalizer(std::move(n));
    }

    const auto expected_bytes = meta.at("blob_bytes").get<std::size_t>();
    std::ifstream in(dir / kBlobFile, std::ios::binary);
    if (!in) throw Error(ErrorCode::kCorruptCheckpoint, "missing parameter blob");
    char magic[sizeof(kBlobMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kBlobMagic, sizeof(magic)) != 0) {
      throw Error(ErrorCode::kCorruptCheckpoint, "bad parameter blob header");
    }
    std::vector<double> blob(expected_bytes / sizeof(double));
    in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(expected_bytes));
    if (static_cast<std::size_t>(in.gcount()) != expected_bytes || in.peek() != EOF) {
      throw Error(ErrorCode::kCorruptCheckpoint, "parameter blob has wrong size");
    }
    if (detail::fnv1a(blob.data(), expected_bytes) != meta.at("blob_checksum").get<std::uint64_t>()) {
      throw Error(ErrorCode::kCorruptCheckpoint, "parameter blob checksum mismatch");
    }

    const auto& table = meta.at("parameters");
    auto params = model.parameters();
    if (table.size() != params.size()) {
      throw Error(ErrorCode::kCorruptCheckpoint, "parameter table does not match config");
    }
    std::size_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto* p = params[i];
      if (table[i].at("name").get<std::string>() != p->name ||
          table[i].at("rows").get<Eigen::Index>() != p->value.rows() ||
          table[i].at("cols").get<Eigen::Index>() != p->value.cols()) {
        throw Error(ErrorCode::kCorruptCheckpoint, "parameter '" + p->name + "' does not match config");
      }
      const auto n = static_cast<std::size_t>(p->value.size());
      if (offset + n > blob.size()) throw Error(ErrorCode::kCorruptCheckpoint, "blob too short");
      std::memcpy(p->value.data(), blob.data() + offset, n * sizeof(double));
      offset += n;
    }
    if (offset != blob.size()) throw Error(ErrorCode::kCorruptCheckpoint, "blob has trailing data");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, std::string("metadata: ") + e.what());
  }
}

}  // namespace models
}  // namespace engage
