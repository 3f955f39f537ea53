#include "ccgm/engine/export.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "ccgm/common/format.hpp"

namespace ccgm::engine {

namespace {

const char* direction_name(PnsDirection d) {
  return d == PnsDirection::kCauseOneEffectOne ? "cause1_effect1" : "cause0_effect1";
}

std::map<std::size_t, std::map<std::size_t, double>> child_uppers(const std::vector<EdgeAnnotation>& edges) {
  std::map<std::size_t, std::map<std::size_t, double>> out;
  for (const auto& a : edges)
    if (a.pns) out[a.parent][a.child] = a.pns->upper;
  return out;
}

}  // namespace

std::vector<PnsRow> pns_table(const CgmModel& model, const Matrix& x) {
  const graph::Dag dag = model.dag();
  std::vector<PnsRow> rows;
  for (std::size_t c = 0; c < dag.size(); ++c) {
    for (std::size_t e : graph::reachability(dag, c, graph::Direction::kDescendants)) {
      if (e == c) continue;
      rows.push_back({c, 1, e, pns_bounds(model, x, c, e, PnsDirection::kCauseOneEffectOne)});
      rows.push_back({c, 0, e, pns_bounds(model, x, c, e, PnsDirection::kCauseZeroEffectOne)});
    }
  }
  return rows;
}

std::string pns_csv(const CgmModel& model, const std::vector<PnsRow>& rows) {
  const auto& names = model.concept_names();
  std::string out = "cause,effect,value,lower,upper\n";
  for (const auto& r : rows) {
    out += names[r.cause] + "=" + std::to_string(r.cause_value) + "," + names[r.effect] + "=1," +
           format_double(r.bounds.upper) + "," + format_double(r.bounds.lower) + "," +
           format_double(r.bounds.upper) + "\n";
  }
  return out;
}

std::vector<EdgeAnnotation> annotate_edges(const CgmModel& model, const Matrix* x) {
  const graph::Dag dag = model.dag();
  std::vector<EdgeAnnotation> out;
  for (const auto& e : dag.edges()) {
    EdgeAnnotation a{e.parent, e.child, e.weight, std::nullopt, PnsDirection::kCauseOneEffectOne};
    if (x != nullptr && x->rows() > 0) {
      const PnsBounds up = pns_bounds(model, *x, e.parent, e.child, PnsDirection::kCauseOneEffectOne);
      const PnsBounds down = pns_bounds(model, *x, e.parent, e.child, PnsDirection::kCauseZeroEffectOne);
      if (down.upper > up.upper) {
        a.pns = down;
        a.direction = PnsDirection::kCauseZeroEffectOne;
      } else {
        a.pns = up;
      }
    }
    out.push_back(a);
  }
  return out;
}

nlohmann::json annotated_structured(const CgmModel& model, const Matrix* x) {
  const graph::Dag dag = model.dag();
  nlohmann::json doc = graph::to_structured(dag);
  doc["edges"] = nlohmann::json::array();
  const auto edges = annotate_edges(model, x);
  for (const auto& a : edges) {
    nlohmann::json e{{"src", dag.nodes()[a.parent]}, {"dst", dag.nodes()[a.child]}, {"weight", a.weight}};
    if (a.pns) {
      e["pns_lower"] = a.pns->lower;
      e["pns_upper"] = a.pns->upper;
      e["pns_direction"] = direction_name(a.direction);
    }
    doc["edges"].push_back(std::move(e));
  }
  if (x != nullptr && x->rows() > 0) {
    nlohmann::json nodes = nlohmann::json::object();
    const auto uppers = child_uppers(edges);
    for (std::size_t i = 0; i < dag.size(); ++i) {
      nlohmann::json children = nlohmann::json::object();
      if (auto it = uppers.find(i); it != uppers.end())
        for (const auto& [c, u] : it->second) children[dag.nodes()[c]] = u;
      nodes[dag.nodes()[i]] = std::move(children);
    }
    doc["node_annotations"] = std::move(nodes);
  }
  return doc;
}

std::string annotated_dot(const CgmModel& model, const Matrix* x) {
  const graph::Dag dag = model.dag();
  std::string out = "digraph causal_graph {\n";
  const auto edges = annotate_edges(model, x);
  const auto uppers = child_uppers(edges);
  char buf[96];
  for (std::size_t i = 0; i < dag.size(); ++i) {
    out += "  \"" + dag.nodes()[i] + "\"";
    if (auto it = uppers.find(i); it != uppers.end()) {
      double best = 0.0;
      for (const auto& [c, u] : it->second) best = std::max(best, u);
      std::snprintf(buf, sizeof(buf), "%s\\npns<=%.4f", dag.nodes()[i].c_str(), best);
      out += std::string(" [label=\"") + buf + "\"]";
    }
    out += ";\n";
  }
  for (const auto& a : edges) {
    if (a.pns) {
      std::snprintf(buf, sizeof(buf), "w=%.4f pns<=%.4f", a.weight, a.pns->upper);
    } else {
      std::snprintf(buf, sizeof(buf), "w=%.4f", a.weight);
    }
    out += "  \"" + dag.nodes()[a.parent] + "\" -> \"" + dag.nodes()[a.child] + "\" [label=\"" + buf + "\"];\n";
  }
  out += "}\n";
  return out;
}

}  // namespace ccgm::engine
