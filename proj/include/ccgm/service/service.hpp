#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ccgm/engine/causal.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace ccgm::service {

struct Response {
  int status = 200;
  nlohmann::json body;
};

// {"nodes": [{"name", "probability", "state", "provenance", "embedding"}]}
nlohmann::json node_states_json(const std::vector<std::string>& names,
                                const engine::NodeStateVector& states);

// Immutable model snapshot plus the precomputed graph payload.
struct Snapshot {
  model::CgmModel model;
  std::optional<diff::Matrix> reference;  // rows used for PNS
  nlohmann::json graph;
};

// One session: a snapshot that can be swapped atomically, the active sample
// and the active spec. Handlers take and return JSON so they can be exercised
// without a socket.
class Session {
 public:
  void load(model::CgmModel model, std::optional<diff::Matrix> reference = std::nullopt);
  void load_checkpoint(const std::filesystem::path& checkpoint,
                       const std::optional<std::filesystem::path>& dataset_csv = std::nullopt);

  Response health() const;
  Response graph() const;
  Response sample(const std::string& body);
  Response predict(const std::string& body) const;
  Response intervene(const std::string& body);
  Response counterfactual(const std::string& body);
  Response pns() const;

 private:
  std::shared_ptr<const Snapshot> snapshot() const;

  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::mutex state_mu_;  // serializes sample/spec mutation per session
  std::optional<diff::Matrix> active_;
  engine::InterventionSpec spec_;
};

// Registers every endpoint of `session` on `server`.
void mount(httplib::Server& server, Session& session);

// Blocks until the server stops. Returns false if the address cannot be bound.
bool serve(Session& session, const std::string& host, int port);

}  // namespace ccgm::service
