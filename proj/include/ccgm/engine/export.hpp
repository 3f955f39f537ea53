#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ccgm/engine/causal.hpp"
#include "json.hpp"

namespace ccgm::engine {

struct EdgeAnnotation {
  std::size_t parent = 0;
  std::size_t child = 0;
  double weight = 0.0;
  // Tian-Pearl bounds of the direction with the larger upper bound.
  std::optional<PnsBounds> pns;
  PnsDirection direction = PnsDirection::kCauseOneEffectOne;
};

struct PnsRow {
  std::size_t cause = 0;
  int cause_value = 1;  // 1: cause=1 produces effect=1; 0: cause=0 produces effect=1
  std::size_t effect = 0;
  PnsBounds bounds;
};

// Both directions for every ancestor -> descendant pair, ordered by
// (cause, effect, cause_value descending).
std::vector<PnsRow> pns_table(const CgmModel& model, const Matrix& x);
// header cause,effect,value,lower,upper; value is the upper bound.
std::string pns_csv(const CgmModel& model, const std::vector<PnsRow>& rows);

// PNS annotations need reference inputs; with x == nullptr edges carry weights only.
std::vector<EdgeAnnotation> annotate_edges(const CgmModel& model, const Matrix* x);

// {"nodes", "edges": [{src, dst, weight[, pns_lower, pns_upper, pns_direction]}],
//  "topological_order"[, "node_annotations": {node: {child: pns_upper}}]}
nlohmann::json annotated_structured(const CgmModel& model, const Matrix* x);
std::string annotated_dot(const CgmModel& model, const Matrix* x);

}  // namespace ccgm::engine
