#include "ccgm/model/config.hpp"

#include <stdexcept>

namespace ccgm::model {

void CgmConfig::validate() const {
  if (k < 1 || d < 1 || hidden_dim < 1 || embed_dim < 1 || batch_size < 1) {
    throw std::invalid_argument("config: all dimensions must be >= 1");
  }
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
    throw std::invalid_argument("config: loss weights must be >= 0");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be > 0");
  if (!(beta > 0.0)) throw std::invalid_argument("config: beta must be > 0");
  for (const auto& e : fixed_edges) {
    if (e.parent >= k || e.child >= k || e.parent == e.child) {
      throw std::invalid_argument("config: fixed edge out of range or self-loop");
    }
  }
}

nlohmann::json CgmConfig::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : fixed_edges) {
    edges.push_back({{"parent", e.parent}, {"child", e.child}, {"weight", e.weight}});
  }
  return {{"k", k},
          {"d", d},
          {"hidden_dim", hidden_dim},
          {"embed_dim", embed_dim},
          {"lambda1", lambda1},
          {"lambda2", lambda2},
          {"lambda3", lambda3},
          {"beta", beta},
          {"gamma_init", gamma_init},
          {"lr", lr},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"graph_mode", graph_mode == GraphMode::kFixed ? "fixed" : "learned"},
          {"fixed_edges", edges}};
}

CgmConfig CgmConfig::from_json(const nlohmann::json& j) {
  CgmConfig c;
  c.k = j.at("k").get<std::size_t>();
  c.d = j.at("d").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.lambda1 = j.at("lambda1").get<double>();
  c.lambda2 = j.at("lambda2").get<double>();
  c.lambda3 = j.at("lambda3").get<double>();
  c.beta = j.at("beta").get<double>();
  c.gamma_init = j.value("gamma_init", 0.1);
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const std::string mode = j.at("graph_mode").get<std::string>();
  if (mode == "fixed") c.graph_mode = GraphMode::kFixed;
  else if (mode == "learned") c.graph_mode = GraphMode::kLearned;
  else throw std::invalid_argument("config: unknown graph_mode " + mode);
  for (const auto& e : j.value("fixed_edges", nlohmann::json::array())) {
    c.fixed_edges.push_back({e.at("parent").get<std::size_t>(), e.at("child").get<std::size_t>(),
                             e.at("weight").get<double>()});
  }
  c.validate();
  return c;
}

}  // namespace ccgm::model
