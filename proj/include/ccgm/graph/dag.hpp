#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "ccgm/diffcore/matrix.hpp"
#include "json.hpp"

namespace ccgm::graph {

using diff::Matrix;

struct WeightedEdge {
  std::size_t parent = 0;
  std::size_t child = 0;
  double weight = 0.0;
  friend bool operator==(const WeightedEdge&, const WeightedEdge&) = default;
};

enum class Direction { kAncestors, kDescendants };

class Dag {
 public:
  Dag() = default;
  // Throws std::invalid_argument if the edges contain a directed cycle.
  Dag(std::vector<std::string> nodes, std::vector<WeightedEdge> edges);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<WeightedEdge>& edges() const { return edges_; }
  const std::vector<std::size_t>& topo_order() const { return order_; }
  const std::vector<std::size_t>& parents(std::size_t node) const { return parents_.at(node); }
  const std::vector<std::size_t>& children(std::size_t node) const { return children_.at(node); }
  bool has_edge(std::size_t parent, std::size_t child) const;
  std::size_t index_of(const std::string& name) const;

  // Weights as a k x k matrix with entry (child, parent).
  Matrix weight_matrix() const;

  // Copy without the incoming edges of the given nodes.
  Dag without_incoming(const std::set<std::size_t>& nodes) const;

 private:
  std::vector<std::string> nodes_;
  std::vector<WeightedEdge> edges_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> order_;
};

// True if the non-zero pattern of `a` (entry (i,j) = edge j->i) has a cycle.
bool has_cycle(const Matrix& a);

// Non-zero entries of `a` become edges; while a cycle remains, removes the
// lightest edge lying on a cycle (ties: lowest parent, then lowest child).
Dag extract_dag(const Matrix& a, std::vector<std::string> names);

std::set<std::size_t> reachability(const Dag& dag, std::size_t node, Direction direction);

// Kahn's algorithm, lowest index first among ready nodes. Throws on cycles.
std::vector<std::size_t> topological_order(std::size_t k, const std::vector<WeightedEdge>& edges);

// DOT text; edge labels are weights rounded to 4 decimals. `node_labels`
// (optional, one per node) adds a label attribute to each node.
std::string to_dot(const Dag& dag, const std::vector<std::string>& node_labels = {});
nlohmann::json to_structured(const Dag& dag);
Dag from_structured(const nlohmann::json& doc);

}  // namespace ccgm::graph
