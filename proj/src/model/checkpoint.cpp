#include "ccgm/model/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "ccgm/common/hash.hpp"

namespace ccgm::model {

namespace {

using nlohmann::json;

json encode_matrix(const diff::Matrix& m) {
  json values = json::array();
  for (double v : m.values()) values.push_back(encode_double(v));
  return {{"shape", {m.rows(), m.cols()}}, {"values", values}};
}

diff::Matrix decode_matrix(const json& j, const std::string& what) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw std::runtime_error(what + ": shape must have two entries");
  const auto& values = j.at("values");
  if (values.size() != shape[0] * shape[1]) {
    throw std::runtime_error(what + ": expected " + std::to_string(shape[0] * shape[1]) +
                             " values, found " + std::to_string(values.size()));
  }
  diff::Matrix m(shape[0], shape[1]);
  for (std::size_t i = 0; i < values.size(); ++i) m[i] = decode_double(values[i].get<std::string>());
  return m;
}

json payload(const json& doc) {
  return {{"params", doc.at("params")}, {"M", doc.value("M", json())},
          {"gamma", doc.value("gamma", json())}};
}

}  // namespace

std::string encode_double(double v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(v)));
  return buf;
}

double decode_double(const std::string& hex) {
  if (hex.size() != 16) throw std::runtime_error("bad float encoding '" + hex + "'");
  std::uint64_t bits = 0;
  for (char c : hex) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else throw std::runtime_error("bad float encoding '" + hex + "'");
    bits = (bits << 4) | static_cast<std::uint64_t>(d);
  }
  return std::bit_cast<double>(bits);
}

json checkpoint_to_json(const Checkpoint& ckpt) {
  json doc;
  doc["version"] = kCheckpointVersion;
  doc["kind"] = ckpt.kind;
  doc["concept_names"] = ckpt.concept_names;
  doc["config"] = ckpt.config;
  json params = json::object();
  for (const auto& p : ckpt.params) params[p.name] = encode_matrix(p.value);
  doc["params"] = params;
  doc["M"] = ckpt.adjacency ? encode_matrix(*ckpt.adjacency) : json();
  doc["gamma"] = ckpt.gamma ? json(encode_double(*ckpt.gamma)) : json();
  doc["seed"] = ckpt.seed;
  doc["metrics"] = ckpt.metrics;
  doc["checksum"] = sha256_hex(payload(doc).dump());
  return doc;
}

Checkpoint checkpoint_from_json(const json& doc) {
  try {
    const auto version = doc.at("version").get<std::string>();
    if (version != kCheckpointVersion) {
      throw std::runtime_error("unsupported checkpoint version '" + version + "' (expected '" +
                               kCheckpointVersion + "')");
    }
    const auto checksum = doc.at("checksum").get<std::string>();
    if (checksum != sha256_hex(payload(doc).dump())) {
      throw std::runtime_error("checksum mismatch: parameter section is corrupt");
    }
    Checkpoint ckpt;
    ckpt.kind = doc.at("kind").get<std::string>();
    ckpt.concept_names = doc.at("concept_names").get<std::vector<std::string>>();
    ckpt.config = doc.at("config");
    for (const auto& [name, block] : doc.at("params").items()) {
      ckpt.params.emplace_back(name, decode_matrix(block, "param " + name));
    }
    if (!doc.at("M").is_null()) ckpt.adjacency = decode_matrix(doc.at("M"), "M");
    if (!doc.at("gamma").is_null()) ckpt.gamma = decode_double(doc.at("gamma").get<std::string>());
    ckpt.seed = doc.at("seed").get<std::uint64_t>();
    ckpt.metrics = doc.value("metrics", json::object());
    return ckpt;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint: ") + e.what());
  }
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ckpt).dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + " is truncated or not valid JSON: " +
                             e.what());
  }
}

}  // namespace

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json(path));
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  const json doc = read_json(path);
  if (!doc.contains("kind")) throw std::runtime_error("checkpoint has no kind tag");
  return doc.at("kind").get<std::string>();
}

Checkpoint to_checkpoint(const CgmModel& model, const json& metrics) {
  Checkpoint ckpt;
  ckpt.kind = "cgm";
  ckpt.concept_names = model.concept_names();
  ckpt.config = model.config().to_json();
  for (const auto* p : model.network_params()) ckpt.params.push_back(*p);
  ckpt.adjacency = model.adjacency().weights().value;
  ckpt.gamma = model.adjacency().gamma_value();
  ckpt.seed = model.config().seed;
  ckpt.metrics = metrics.is_null() ? json::object() : metrics;
  return ckpt;
}

CgmModel cgm_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "cgm") throw std::runtime_error("checkpoint kind is '" + ckpt.kind + "', not cgm");
  if (!ckpt.adjacency || !ckpt.gamma) throw std::runtime_error("cgm checkpoint lacks M or gamma");
  const CgmConfig config = CgmConfig::from_json(ckpt.config);
  CgmModel model(config, ckpt.concept_names);
  for (const auto& p : ckpt.params) {
    auto& dst = model.param(p.name);
    if (!dst.value.same_shape(p.value)) {
      throw std::runtime_error("param " + p.name + " has shape " + p.value.shape_string() +
                               ", expected " + dst.value.shape_string());
    }
    dst.value = p.value;
  }
  if (ckpt.params.size() != model.network_params().size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(ckpt.params.size()) +
                             " parameter blocks, model expects " +
                             std::to_string(model.network_params().size()));
  }
  if (ckpt.adjacency->rows() != config.k || ckpt.adjacency->cols() != config.k) {
    throw std::runtime_error("M has shape " + ckpt.adjacency->shape_string());
  }
  model.adjacency().weights().value = *ckpt.adjacency;
  model.adjacency().gamma().value(0, 0) = *ckpt.gamma;
  return model;
}

void save_cgm(const CgmModel& model, const std::filesystem::path& path, const json& metrics) {
  write_checkpoint(to_checkpoint(model, metrics), path);
}

CgmModel load_cgm(const std::filesystem::path& path) {
  return cgm_from_checkpoint(read_checkpoint(path));
}

}  // namespace ccgm::model
