#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccgm/engine/causal.hpp"

namespace ccgm::engine {

struct BridgeEdge {
  std::string from;  // node of the first model
  std::string to;    // node of the second model
  double weight = 1.0;
};

// Two independently trained CGMs joined by bridge edges from the first into
// the second. Inputs are [x1 | x2]; node order is the first model's nodes
// followed by the second's. Sub-model parameters are never modified; bridged
// targets may use their own aggregator/head copies (see fit_bridge_heads).
class ComposedModel {
 public:
  ComposedModel(CgmModel first, CgmModel second, std::vector<BridgeEdge> bridges);

  const CgmModel& first() const { return first_; }
  const CgmModel& second() const { return second_; }
  const std::vector<std::string>& concept_names() const { return names_; }
  std::size_t k() const { return names_.size(); }
  std::size_t feature_dim() const { return first_.config().d + second_.config().d; }
  const graph::Dag& dag() const { return dag_; }
  const std::vector<BridgeEdge>& bridges() const { return bridges_; }

  UnfoldResult unfold(const Matrix& x, const InterventionSpec& spec = {}) const;

  // Trains private aggregator/head copies for every bridged target on paired
  // data (labels are B x k in composed order). Returns the last epoch's mean loss.
  double fit_bridge_heads(const Matrix& x, const Matrix& labels, std::size_t epochs, double lr,
                          std::uint64_t seed);

 private:
  struct Head {
    std::array<diff::ParamBlock, 4> blocks;  // aggregator W, b, head W, b
  };
  diff::Var head_logit(diff::Tape& tape, const Head& head, diff::Var agg) const;
  std::vector<std::pair<std::size_t, double>> bridges_into(std::size_t composed_target,
                                                           const graph::Dag& dag) const;

  CgmModel first_;
  CgmModel second_;
  std::vector<BridgeEdge> bridges_;
  std::vector<std::string> names_;
  graph::Dag dag_;
  std::map<std::size_t, Head> heads_;  // keyed by composed index of the target
};

// Rejects name clashes, mismatched embedding sizes, unknown bridge endpoints
// and cycles.
ComposedModel merge_models(CgmModel first, CgmModel second, std::vector<BridgeEdge> bridges);

}  // namespace ccgm::engine
