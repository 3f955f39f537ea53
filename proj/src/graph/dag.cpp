#include "ccgm/graph/dag.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <tuple>

namespace ccgm::graph {

std::vector<std::size_t> topological_order(std::size_t k, const std::vector<WeightedEdge>& edges) {
  std::vector<std::size_t> indegree(k, 0);
  std::vector<std::vector<std::size_t>> children(k);
  for (const auto& e : edges) {
    if (e.parent >= k || e.child >= k) throw std::out_of_range("topological_order: bad edge");
    children[e.parent].push_back(e.child);
    ++indegree[e.child];
  }
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < k; ++i)
    if (indegree[i] == 0) ready.insert(i);
  std::vector<std::size_t> order;
  order.reserve(k);
  while (!ready.empty()) {
    const std::size_t v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (std::size_t c : children[v])
      if (--indegree[c] == 0) ready.insert(c);
  }
  if (order.size() != k) throw std::invalid_argument("topological_order: graph has a cycle");
  return order;
}

Dag::Dag(std::vector<std::string> nodes, std::vector<WeightedEdge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  const std::size_t k = nodes_.size();
  parents_.assign(k, {});
  children_.assign(k, {});
  std::sort(edges_.begin(), edges_.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
    return std::tie(a.parent, a.child) < std::tie(b.parent, b.child);
  });
  for (const auto& e : edges_) {
    if (e.parent >= k || e.child >= k) throw std::out_of_range("Dag: edge references unknown node");
    if (e.parent == e.child) throw std::invalid_argument("Dag: self-loop on " + nodes_[e.parent]);
    parents_[e.child].push_back(e.parent);
    children_[e.parent].push_back(e.child);
  }
  for (auto& p : parents_) std::sort(p.begin(), p.end());
  for (auto& c : children_) std::sort(c.begin(), c.end());
  order_ = topological_order(k, edges_);
}

bool Dag::has_edge(std::size_t parent, std::size_t child) const {
  const auto& p = parents_.at(child);
  return std::binary_search(p.begin(), p.end(), parent);
}

std::size_t Dag::index_of(const std::string& name) const {
  auto it = std::find(nodes_.begin(), nodes_.end(), name);
  if (it == nodes_.end()) throw std::invalid_argument("unknown node: " + name);
  return static_cast<std::size_t>(it - nodes_.begin());
}

Matrix Dag::weight_matrix() const {
  Matrix m(size(), size());
  for (const auto& e : edges_) m(e.child, e.parent) = e.weight;
  return m;
}

Dag Dag::without_incoming(const std::set<std::size_t>& nodes) const {
  std::vector<WeightedEdge> kept;
  for (const auto& e : edges_)
    if (!nodes.contains(e.child)) kept.push_back(e);
  return Dag(nodes_, std::move(kept));
}

namespace {

// reach[i][j] = there is a path of length >= 1 from i to j.
std::vector<std::vector<bool>> closure(const Matrix& a) {
  const std::size_t k = a.rows();
  std::vector<std::vector<bool>> reach(k, std::vector<bool>(k, false));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (a(i, j) != 0.0) reach[j][i] = true;  // edge j -> i
  for (std::size_t m = 0; m < k; ++m)
    for (std::size_t i = 0; i < k; ++i)
      if (reach[i][m])
        for (std::size_t j = 0; j < k; ++j)
          if (reach[m][j]) reach[i][j] = true;
  return reach;
}

}  // namespace

bool has_cycle(const Matrix& a) {
  const auto reach = closure(a);
  for (std::size_t i = 0; i < a.rows(); ++i)
    if (reach[i][i]) return true;
  return false;
}

Dag extract_dag(const Matrix& a, std::vector<std::string> names) {
  const std::size_t k = a.rows();
  if (a.cols() != k) throw std::invalid_argument("extract_dag: A must be square");
  if (names.size() != k) throw std::invalid_argument("extract_dag: one name per node required");
  Matrix work = a;
  for (std::size_t i = 0; i < k; ++i) work(i, i) = 0.0;
  for (;;) {
    const auto reach = closure(work);
    bool found = false;
    std::tuple<double, std::size_t, std::size_t> best{};
    for (std::size_t child = 0; child < k; ++child) {
      for (std::size_t parent = 0; parent < k; ++parent) {
        const double w = work(child, parent);
        if (w == 0.0) continue;
        // parent -> child lies on a cycle iff child reaches parent.
        if (!reach[child][parent]) continue;
        const auto cand = std::make_tuple(w, parent, child);
        if (!found || cand < best) {
          best = cand;
          found = true;
        }
      }
    }
    if (!found) break;
    work(std::get<2>(best), std::get<1>(best)) = 0.0;
  }
  std::vector<WeightedEdge> edges;
  for (std::size_t child = 0; child < k; ++child)
    for (std::size_t parent = 0; parent < k; ++parent)
      if (work(child, parent) != 0.0) edges.push_back({parent, child, work(child, parent)});
  return Dag(std::move(names), std::move(edges));
}

std::set<std::size_t> reachability(const Dag& dag, std::size_t node, Direction direction) {
  if (node >= dag.size()) throw std::out_of_range("reachability: unknown node");
  std::set<std::size_t> seen;
  std::vector<std::size_t> stack{node};
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    const auto& next = direction == Direction::kDescendants ? dag.children(v) : dag.parents(v);
    for (std::size_t n : next)
      if (seen.insert(n).second) stack.push_back(n);
  }
  seen.erase(node);
  return seen;
}

std::string to_dot(const Dag& dag, const std::vector<std::string>& node_labels) {
  std::string out = "digraph causal_graph {\n";
  for (std::size_t i = 0; i < dag.size(); ++i) {
    out += "  \"" + dag.nodes()[i] + "\"";
    if (i < node_labels.size() && !node_labels[i].empty()) {
      out += " [label=\"" + node_labels[i] + "\"]";
    }
    out += ";\n";
  }
  char buf[64];
  for (const auto& e : dag.edges()) {
    std::snprintf(buf, sizeof(buf), "%.4f", e.weight);
    out += "  \"" + dag.nodes()[e.parent] + "\" -> \"" + dag.nodes()[e.child] + "\" [label=\"" +
           buf + "\"];\n";
  }
  out += "}\n";
  return out;
}

nlohmann::json to_structured(const Dag& dag) {
  nlohmann::json doc;
  doc["nodes"] = dag.nodes();
  doc["edges"] = nlohmann::json::array();
  for (const auto& e : dag.edges()) {
    doc["edges"].push_back(
        {{"src", dag.nodes()[e.parent]}, {"dst", dag.nodes()[e.child]}, {"weight", e.weight}});
  }
  std::vector<std::string> order;
  for (std::size_t i : dag.topo_order()) order.push_back(dag.nodes()[i]);
  doc["topological_order"] = order;
  return doc;
}

Dag from_structured(const nlohmann::json& doc) {
  auto names = doc.at("nodes").get<std::vector<std::string>>();
  auto index = [&names](const std::string& n) {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) throw std::invalid_argument("structured graph: unknown node " + n);
    return static_cast<std::size_t>(it - names.begin());
  };
  std::vector<WeightedEdge> edges;
  for (const auto& e : doc.at("edges")) {
    edges.push_back({index(e.at("src").get<std::string>()), index(e.at("dst").get<std::string>()),
                     e.at("weight").get<double>()});
  }
  return Dag(std::move(names), std::move(edges));
}

}  // namespace ccgm::graph
