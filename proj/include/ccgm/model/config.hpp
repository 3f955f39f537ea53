#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace ccgm::model {

enum class GraphMode { kLearned, kFixed };

struct FixedGraphEdge {
  std::size_t parent = 0;
  std::size_t child = 0;
  double weight = 1.0;
};

// Hyperparameters shared by the CGM and (dims / optimisation fields only) the baselines.
struct CgmConfig {
  std::size_t k = 1;  // endogenous variables
  std::size_t d = 1;  // feature dimension
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 16;
  double lambda1 = 1.0;   // endogenous prediction
  double lambda2 = 1.0;   // acyclicity prior
  double lambda3 = 0.05;  // CaCE regulariser
  double beta = 1.0;
  double gamma_init = 0.1;
  double lr = 0.01;
  std::size_t epochs = 500;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  GraphMode graph_mode = GraphMode::kLearned;
  std::vector<FixedGraphEdge> fixed_edges;

  void validate() const;
  nlohmann::json to_json() const;
  static CgmConfig from_json(const nlohmann::json& j);
};

}  // namespace ccgm::model
