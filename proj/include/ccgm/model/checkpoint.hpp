#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ccgm/diffcore/tape.hpp"
#include "ccgm/model/cgm.hpp"
#include "json.hpp"

namespace ccgm::model {

inline constexpr const char* kCheckpointVersion = "1";

// Container shared by the CGM and the baselines. Floats are stored as the
// hex digits of their 64-bit pattern; `checksum` covers the params, M and gamma.
struct Checkpoint {
  std::string kind;  // "cgm", "blackbox", "cbm", "cem"
  std::vector<std::string> concept_names;
  nlohmann::json config;
  std::vector<diff::ParamBlock> params;
  std::optional<diff::Matrix> adjacency;
  std::optional<double> gamma;
  std::uint64_t seed = 0;
  nlohmann::json metrics = nlohmann::json::object();
};

std::string encode_double(double v);
double decode_double(const std::string& hex);

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
// Throws std::runtime_error naming the failing field on version mismatch,
// missing fields, malformed values or checksum failure.
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);
// Reads only the kind tag.
std::string checkpoint_kind(const std::filesystem::path& path);

Checkpoint to_checkpoint(const CgmModel& model, const nlohmann::json& metrics = {});
CgmModel cgm_from_checkpoint(const Checkpoint& ckpt);

void save_cgm(const CgmModel& model, const std::filesystem::path& path,
              const nlohmann::json& metrics = {});
CgmModel load_cgm(const std::filesystem::path& path);

}  // namespace ccgm::model
