#include "ccgm/engine/causal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

namespace ccgm::engine {

namespace {

Matrix constant_column(std::size_t rows, double v) { return Matrix(rows, 1, v); }

Matrix column_of(const Matrix& m, std::size_t c) {
  Matrix out(m.rows(), 1);
  for (std::size_t r = 0; r < m.rows(); ++r) out(r, 0) = m(r, c);
  return out;
}

void check_node(const CgmModel& model, std::size_t node, const char* what) {
  if (node >= model.k()) {
    throw std::invalid_argument(std::string(what) + ": unknown node index " + std::to_string(node));
  }
}

double mean_abs_diff(const Matrix& a, const Matrix& b, std::size_t col) {
  double sum = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) sum += std::fabs(a(r, col) - b(r, col));
  return a.rows() == 0 ? 0.0 : sum / static_cast<double>(a.rows());
}

double column_mean(const Matrix& a, std::size_t col) {
  double sum = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) sum += a(r, col);
  return a.rows() == 0 ? 0.0 : sum / static_cast<double>(a.rows());
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

// Accuracy of hard predictions against labels over the listed columns.
double accuracy_on(const Matrix& probs, const Matrix& labels, const std::vector<std::size_t>& cols) {
  if (cols.empty() || probs.rows() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < probs.rows(); ++r)
    for (std::size_t c : cols) hits += hard_state(probs(r, c)) == static_cast<int>(labels(r, c));
  return static_cast<double>(hits) / static_cast<double>(probs.rows() * cols.size());
}

}  // namespace

std::string to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::kDo:
      return "do";
    case ActionKind::kGroundTruth:
      return "ground_truth";
    case ActionKind::kBlock:
      return "block";
  }
  return "unknown";
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kPredicted:
      return "predicted";
    case Provenance::kDo:
      return "do";
    case Provenance::kGroundTruth:
      return "ground_truth";
    case Provenance::kBlocked:
      return "blocked";
  }
  return "unknown";
}

void InterventionSpec::push(Action a) {
  const bool is_block = a.kind == ActionKind::kBlock;
  for (const auto& other : actions_) {
    if (other.node != a.node) continue;
    if ((other.kind == ActionKind::kBlock) == is_block) {
      throw std::invalid_argument("intervention spec: node " + std::to_string(a.node) +
                                  " already has an action of this kind");
    }
  }
  actions_.push_back(std::move(a));
}

InterventionSpec& InterventionSpec::add_do(std::size_t node, int kappa) {
  if (kappa != 0 && kappa != 1) throw std::invalid_argument("do: kappa must be 0 or 1");
  push({node, ActionKind::kDo, kappa, std::nullopt});
  return *this;
}

InterventionSpec& InterventionSpec::add_ground_truth(std::size_t node, int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("ground truth: label must be 0 or 1");
  push({node, ActionKind::kGroundTruth, label, std::nullopt});
  return *this;
}

InterventionSpec& InterventionSpec::add_ground_truth(std::size_t node, Matrix labels) {
  if (labels.cols() != 1) throw std::invalid_argument("ground truth: labels must be a column");
  for (double v : labels.values())
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("ground truth: labels must be 0 or 1");
  push({node, ActionKind::kGroundTruth, 0, std::move(labels)});
  return *this;
}

InterventionSpec& InterventionSpec::add_block(std::size_t node) {
  push({node, ActionKind::kBlock, 0, std::nullopt});
  return *this;
}

bool InterventionSpec::only_do() const {
  return std::all_of(actions_.begin(), actions_.end(),
                     [](const Action& a) { return a.kind == ActionKind::kDo; });
}

const Action* InterventionSpec::find(std::size_t node) const {
  for (const auto& a : actions_)
    if (a.node == node && a.kind != ActionKind::kBlock) return &a;
  return nullptr;
}

nlohmann::json InterventionSpec::to_json(const std::vector<std::string>& names) const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& a : actions_) {
    if (a.labels) throw std::invalid_argument("spec with per-sample labels cannot be serialised");
    nlohmann::json item = {{"node", names.at(a.node)}, {"kind", to_string(a.kind)}};
    if (a.kind != ActionKind::kBlock) item["value"] = a.value;
    out.push_back(item);
  }
  return out;
}

InterventionSpec InterventionSpec::from_json(const nlohmann::json& j,
                                             const std::vector<std::string>& names) {
  if (!j.is_array()) throw std::invalid_argument("intervention spec must be an array");
  // get<int>() would truncate 0.5 to 0.
  auto binary = [](const nlohmann::json& item) {
    if (!item.contains("value") || !item["value"].is_number_integer()) {
      throw std::invalid_argument("action value must be the integer 0 or 1");
    }
    return item["value"].get<int>();
  };
  InterventionSpec spec;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("node") || !item["node"].is_string() ||
        !item.contains("kind") || !item["kind"].is_string()) {
      throw std::invalid_argument("action needs string fields node and kind");
    }
    const auto name = item.at("node").get<std::string>();
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::invalid_argument("unknown node: " + name);
    const auto node = static_cast<std::size_t>(it - names.begin());
    const auto kind = item.at("kind").get<std::string>();
    if (kind == "do") spec.add_do(node, binary(item));
    else if (kind == "ground_truth") spec.add_ground_truth(node, binary(item));
    else if (kind == "block") spec.add_block(node);
    else throw std::invalid_argument("unknown action kind: " + kind);
  }
  return spec;
}

NodeStateVector UnfoldResult::sample(std::size_t row) const {
  if (row >= probs.rows()) throw std::out_of_range("UnfoldResult::sample");
  NodeStateVector out(probs.cols());
  for (std::size_t i = 0; i < probs.cols(); ++i) {
    out[i].probability = probs(row, i);
    out[i].state = static_cast<int>(states(row, i));
    const auto emb = embeddings[i].row(row);
    out[i].embedding.assign(emb.begin(), emb.end());
    out[i].provenance = provenance[i];
  }
  return out;
}

UnfoldResult unfold_predict(const CgmModel& model, const Matrix& x, const InterventionSpec& spec,
                            int sweeps) {
  const std::size_t k = model.k();
  const std::size_t b = x.rows();
  for (const auto& a : spec.actions()) {
    check_node(model, a.node, "unfold_predict");
    if (a.labels && a.labels->rows() != b) {
      throw std::invalid_argument("unfold_predict: ground-truth labels for node " +
                                  model.concept_names()[a.node] + " have " +
                                  std::to_string(a.labels->rows()) + " rows, expected " +
                                  std::to_string(b));
    }
  }
  const graph::Dag base = model.dag();
  std::vector<std::optional<Matrix>> overrides(k);
  std::vector<Provenance> provenance(k, Provenance::kPredicted);
  std::set<std::size_t> severed;

  for (const auto& a : spec.actions()) {
    if (a.kind == ActionKind::kDo) {
      overrides[a.node] = constant_column(b, a.value);
      provenance[a.node] = Provenance::kDo;
      severed.insert(a.node);
    } else if (a.kind == ActionKind::kGroundTruth) {
      overrides[a.node] = a.labels ? *a.labels : constant_column(b, a.value);
      provenance[a.node] = Provenance::kGroundTruth;
      severed.insert(a.node);
    }
  }
  bool has_block = false;
  for (const auto& a : spec.actions()) has_block = has_block || a.kind == ActionKind::kBlock;
  if (has_block) {
    const model::UnfoldOutput factual = model.unfold(x, base, {});
    for (const auto& a : spec.actions()) {
      if (a.kind != ActionKind::kBlock) continue;
      for (std::size_t c : base.children(a.node)) {
        if (severed.contains(c)) continue;
        Matrix pin(b, 1);
        for (std::size_t r = 0; r < b; ++r) pin(r, 0) = hard_state(factual.probs(r, c));
        overrides[c] = std::move(pin);
        provenance[c] = Provenance::kBlocked;
        severed.insert(c);
      }
    }
  }

  UnfoldResult out;
  out.effective_graph = base.without_incoming(severed);
  model::UnfoldOutput raw = model.unfold(x, out.effective_graph, overrides, sweeps);
  out.probs = std::move(raw.probs);
  out.embeddings = std::move(raw.embeddings);
  out.provenance = std::move(provenance);
  out.states = Matrix(b, k);
  for (std::size_t i = 0; i < out.probs.size(); ++i) out.states[i] = hard_state(out.probs[i]);
  return out;
}

std::pair<UnfoldResult, UnfoldResult> ground_truth_intervene(const CgmModel& model,
                                                              const Matrix& x,
                                                              const Matrix& labels,
                                                              const std::vector<std::size_t>& nodes) {
  if (nodes.empty()) throw std::invalid_argument("ground_truth_intervene: no nodes given");
  if (labels.rows() != x.rows() || labels.cols() != model.k()) {
    throw std::invalid_argument("ground_truth_intervene: labels must be B x k");
  }
  InterventionSpec spec;
  for (std::size_t n : nodes) {
    check_node(model, n, "ground_truth_intervene");
    spec.add_ground_truth(n, column_of(labels, n));
  }
  return {unfold_predict(model, x), unfold_predict(model, x, spec)};
}

nlohmann::json CausalReport::to_json() const {
  nlohmann::json out = {{"kind", kind},
                        {"nodes", nodes},
                        {"factual", matrix_json(factual)},
                        {"counterfactual", matrix_json(counterfactual)},
                        {"effect", matrix_json(effect)},
                        {"spec", spec}};
  if (bounds) out["bounds"] = {{"lower", bounds->first}, {"upper", bounds->second}};
  return out;
}

CausalReport counterfactual_query(const CgmModel& model, const Matrix& x,
                                  const InterventionSpec& do_spec) {
  if (!do_spec.only_do()) {
    throw std::invalid_argument("counterfactual_query: spec may only contain do actions");
  }
  CausalReport report;
  report.kind = "counterfactual";
  report.nodes = model.concept_names();
  report.spec = do_spec.to_json(model.concept_names());
  report.factual = unfold_predict(model, x).probs;
  report.counterfactual = unfold_predict(model, x, do_spec).probs;
  report.effect = Matrix(x.rows(), model.k());
  for (std::size_t i = 0; i < report.effect.size(); ++i) {
    report.effect[i] = report.counterfactual[i] - report.factual[i];
  }
  return report;
}

InterventionSpec block_node(const CgmModel& model, std::size_t j) {
  check_node(model, j, "block_node");
  InterventionSpec spec;
  spec.add_block(j);
  return spec;
}

std::vector<double> cace_row(const CgmModel& model, const Matrix& x, std::size_t cause,
                             const InterventionSpec& base) {
  check_node(model, cause, "cace");
  InterventionSpec one = base;
  one.add_do(cause, 1);
  InterventionSpec zero = base;
  zero.add_do(cause, 0);
  const Matrix p1 = unfold_predict(model, x, one).probs;
  const Matrix p0 = unfold_predict(model, x, zero).probs;
  std::vector<double> out(model.k(), 0.0);
  for (std::size_t i = 0; i < model.k(); ++i)
    if (i != cause) out[i] = mean_abs_diff(p1, p0, i);
  return out;
}

double cace(const CgmModel& model, const Matrix& x, std::size_t cause, std::size_t effect,
            const InterventionSpec& base) {
  check_node(model, effect, "cace");
  if (cause == effect) throw std::invalid_argument("cace: cause and effect must differ");
  return cace_row(model, x, cause, base)[effect];
}

ResidualCace residual_cace(const CgmModel& model, const Matrix& x, std::size_t cause,
                           std::size_t effect) {
  check_node(model, cause, "residual_cace");
  check_node(model, effect, "residual_cace");
  const graph::Dag dag = model.dag();
  if (!graph::reachability(dag, cause, graph::Direction::kDescendants).contains(effect)) {
    throw std::invalid_argument("residual_cace: " + model.concept_names()[cause] +
                                " is not an ancestor of " + model.concept_names()[effect]);
  }
  ResidualCace out;
  out.before = cace(model, x, cause, effect);
  out.after = cace(model, x, cause, effect, block_node(model, cause));
  if (out.before < 1e-9) {
    out.degenerate = true;
    out.percent = 0.0;
  } else {
    out.percent = 100.0 * out.after / out.before;
  }
  return out;
}

ResidualCace cbm_residual_cace(const baselines::BaselineModel& cbm, const Matrix& x,
                               std::size_t cause, const std::vector<data::LabelEdge>& graph) {
  const std::size_t task = cbm.config().k - 1;
  if (cause >= task) throw std::invalid_argument("cbm_residual_cace: cause must be a concept");
  const std::size_t b = x.rows();
  const auto factual = cbm.predict(x);
  std::map<std::size_t, Matrix> pins;
  for (const auto& e : graph) {
    if (e.parent != cause || e.child == task) continue;
    Matrix pin(b, 1);
    for (std::size_t r = 0; r < b; ++r) pin(r, 0) = hard_state(factual.concepts(r, e.child));
    pins[e.child] = std::move(pin);
  }
  auto task_effect = [&](std::map<std::size_t, Matrix> corrections) {
    corrections[cause] = constant_column(b, 1.0);
    const Matrix t1 = cbm.intervene(x, corrections).task;
    corrections[cause] = constant_column(b, 0.0);
    const Matrix t0 = cbm.intervene(x, corrections).task;
    return mean_abs_diff(t1, t0, 0);
  };
  ResidualCace out;
  out.before = task_effect({});
  out.after = task_effect(pins);
  if (out.before < 1e-9) {
    out.degenerate = true;
    out.percent = 0.0;
  } else {
    out.percent = 100.0 * out.after / out.before;
  }
  return out;
}

PnsBounds pns_bounds(const CgmModel& model, const Matrix& x, std::size_t cause,
                     std::size_t effect, PnsDirection direction) {
  check_node(model, cause, "pns_bounds");
  check_node(model, effect, "pns_bounds");
  if (cause == effect) throw std::invalid_argument("pns_bounds: cause and effect must differ");
  PnsBounds out;
  const graph::Dag dag = model.dag();
  if (!graph::reachability(dag, cause, graph::Direction::kDescendants).contains(effect)) {
    out.connected = false;
    return out;
  }
  InterventionSpec one;
  one.add_do(cause, 1);
  InterventionSpec zero;
  zero.add_do(cause, 0);
  out.p1 = column_mean(unfold_predict(model, x, one).probs, effect);
  out.p0 = column_mean(unfold_predict(model, x, zero).probs, effect);
  // "treated" arm produces the effect, "control" arm is the other setting.
  const double treated = direction == PnsDirection::kCauseOneEffectOne ? out.p1 : out.p0;
  const double control = direction == PnsDirection::kCauseOneEffectOne ? out.p0 : out.p1;
  out.lower = std::max(0.0, treated - control);
  out.upper = std::min(treated, 1.0 - control);
  return out;
}

std::vector<std::size_t> descendant_order(const graph::Dag& dag) {
  std::vector<std::pair<std::size_t, std::size_t>> counts;
  for (std::size_t i = 0; i < dag.size(); ++i) {
    counts.push_back({graph::reachability(dag, i, graph::Direction::kDescendants).size(), i});
  }
  std::stable_sort(counts.begin(), counts.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> order;
  for (const auto& c : counts) order.push_back(c.second);
  return order;
}

namespace {

CurveStep make_step(std::size_t step, const std::vector<std::size_t>& chosen, std::size_t k,
                    const std::vector<std::string>& names, const Matrix& before,
                    const Matrix& after, const Matrix& labels) {
  CurveStep s;
  s.step = step;
  std::vector<std::size_t> rest;
  std::vector<std::size_t> rest_concepts;
  for (std::size_t i = 0; i < k; ++i) {
    if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
    rest.push_back(i);
    if (i + 1 < k) rest_concepts.push_back(i);
  }
  for (std::size_t i : chosen) s.intervened.push_back(names[i]);
  s.delta_accuracy = accuracy_on(after, labels, rest) - accuracy_on(before, labels, rest);
  s.delta_concept_accuracy =
      accuracy_on(after, labels, rest_concepts) - accuracy_on(before, labels, rest_concepts);
  return s;
}

}  // namespace

CurveSeries intervention_curve(const CgmModel& model, const data::ConceptDataset& ds,
                               std::size_t max_interventions) {
  const std::size_t k = model.k();
  const std::size_t steps = std::min(max_interventions, k);
  const auto order = descendant_order(model.dag());
  const Matrix before = unfold_predict(model, ds.features).probs;
  CurveSeries series;
  series.model = "cgm";
  for (std::size_t t = 1; t <= steps; ++t) {
    std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(t));
    InterventionSpec spec;
    for (std::size_t n : chosen) spec.add_ground_truth(n, column_of(ds.labels, n));
    const Matrix after = unfold_predict(model, ds.features, spec).probs;
    series.steps.push_back(
        make_step(t, chosen, k, model.concept_names(), before, after, ds.labels));
  }
  return series;
}

CurveSeries intervention_curve(const baselines::BaselineModel& model,
                               const data::ConceptDataset& ds, std::size_t max_interventions) {
  if (model.kind() == baselines::BaselineKind::kBlackbox) {
    throw std::invalid_argument("intervention_curve: blackbox models have no concepts");
  }
  const std::size_t k = model.config().k;
  const std::size_t c = k - 1;
  const std::size_t steps = std::min(max_interventions, c);
  const auto base = model.predict(ds.features);
  const Matrix before = base.all();
  std::vector<std::pair<double, std::size_t>> err;
  for (std::size_t i = 0; i < c; ++i) {
    double sum = 0.0;
    for (std::size_t r = 0; r < ds.rows(); ++r) sum += std::fabs(base.concepts(r, i) - ds.labels(r, i));
    err.push_back({sum / static_cast<double>(ds.rows()), i});
  }
  std::stable_sort(err.begin(), err.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  CurveSeries series;
  series.model = baselines::to_string(model.kind());
  for (std::size_t t = 1; t <= steps; ++t) {
    std::vector<std::size_t> chosen;
    std::map<std::size_t, Matrix> corrections;
    for (std::size_t q = 0; q < t; ++q) {
      chosen.push_back(err[q].second);
      corrections[err[q].second] = column_of(ds.labels, err[q].second);
    }
    const Matrix after = model.intervene(ds.features, corrections).all();
    series.steps.push_back(make_step(t, chosen, k, model.concept_names(), before, after, ds.labels));
  }
  return series;
}

std::string minimize_sop(const std::vector<int>& truth_table, const std::vector<std::string>& vars) {
  const std::size_t n = vars.size();
  if (truth_table.size() != (std::size_t{1} << n)) {
    throw std::invalid_argument("minimize_sop: truth table must have 2^n entries");
  }
  std::vector<std::uint32_t> minterms;
  for (std::uint32_t m = 0; m < truth_table.size(); ++m)
    if (truth_table[m] != 0) minterms.push_back(m);
  if (minterms.empty()) return "False";
  if (minterms.size() == truth_table.size()) return "True";

  // Implicant: (value, mask) where mask bits are don't-care.
  using Term = std::pair<std::uint32_t, std::uint32_t>;
  std::set<Term> current;
  for (auto m : minterms) current.insert({m, 0});
  std::set<Term> primes;
  while (!current.empty()) {
    std::set<Term> next;
    std::set<Term> used;
    for (auto it = current.begin(); it != current.end(); ++it) {
      for (auto jt = std::next(it); jt != current.end(); ++jt) {
        if (it->second != jt->second) continue;
        const std::uint32_t diff = it->first ^ jt->first;
        if (diff == 0 || (diff & (diff - 1)) != 0) continue;
        next.insert({it->first & ~diff, it->second | diff});
        used.insert(*it);
        used.insert(*jt);
      }
    }
    for (const auto& t : current)
      if (!used.contains(t)) primes.insert(t);
    current = std::move(next);
  }
  auto covers = [](const Term& t, std::uint32_t m) { return (m & ~t.second) == t.first; };
  auto literal_count = [n](const Term& t) {
    std::size_t c = 0;
    for (std::size_t q = 0; q < n; ++q) c += ((t.second >> q) & 1u) == 0;
    return c;
  };

  std::vector<Term> chosen;
  std::set<std::uint32_t> uncovered(minterms.begin(), minterms.end());
  // Essential primes.
  for (auto m : minterms) {
    const Term* only = nullptr;
    std::size_t count = 0;
    for (const auto& p : primes) {
      if (covers(p, m)) {
        ++count;
        only = &p;
      }
    }
    if (count == 1 && std::find(chosen.begin(), chosen.end(), *only) == chosen.end()) {
      chosen.push_back(*only);
    }
  }
  for (const auto& t : chosen)
    for (auto it = uncovered.begin(); it != uncovered.end();)
      it = covers(t, *it) ? uncovered.erase(it) : std::next(it);
  // Greedy for the rest: most new minterms, then fewest literals, then order.
  while (!uncovered.empty()) {
    const Term* best = nullptr;
    std::size_t best_gain = 0;
    for (const auto& p : primes) {
      std::size_t gain = 0;
      for (auto m : uncovered) gain += covers(p, m);
      if (gain == 0) continue;
      if (best == nullptr || gain > best_gain ||
          (gain == best_gain && literal_count(p) < literal_count(*best))) {
        best = &p;
        best_gain = gain;
      }
    }
    chosen.push_back(*best);
    for (auto it = uncovered.begin(); it != uncovered.end();)
      it = covers(*best, *it) ? uncovered.erase(it) : std::next(it);
  }

  auto render = [&](const Term& t) {
    std::string s;
    for (std::size_t q = 0; q < n; ++q) {
      if ((t.second >> q) & 1u) continue;
      if (!s.empty()) s += " & ";
      if (((t.first >> q) & 1u) == 0) s += "~";
      s += vars[q];
    }
    return s;
  };
  std::vector<std::string> terms;
  for (const auto& t : chosen) terms.push_back(render(t));
  std::sort(terms.begin(), terms.end(), [](const std::string& a, const std::string& b) {
    return std::make_pair(a.size(), a) < std::make_pair(b.size(), b);
  });
  std::string out;
  for (const auto& t : terms) {
    if (!out.empty()) out += " | ";
    out += t;
  }
  return out;
}

std::vector<NodeRule> extract_logic_rules(const CgmModel& model, const data::ConceptDataset& ds) {
  if (ds.rows() == 0) throw std::invalid_argument("extract_logic_rules: empty dataset");
  const graph::Dag dag = model.dag();
  const Matrix states = unfold_predict(model, ds.features).states;
  std::vector<NodeRule> rules;
  for (std::size_t i = 0; i < model.k(); ++i) {
    NodeRule rule;
    rule.node = model.concept_names()[i];
    const auto& parents = dag.parents(i);
    for (std::size_t p : parents) rule.parents.push_back(model.concept_names()[p]);
    if (parents.empty()) {
      rule.formula = "ε";
      rules.push_back(rule);
      continue;
    }
    if (parents.size() > kMaxRuleParents) {
      rule.skipped = true;
      rule.notice = "node " + rule.node + " has " + std::to_string(parents.size()) +
                    " parents; truth tables are limited to " + std::to_string(kMaxRuleParents);
      rules.push_back(rule);
      continue;
    }
    const std::size_t combos = std::size_t{1} << parents.size();
    std::vector<std::array<std::size_t, 2>> counts(combos, {0, 0});
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      std::size_t combo = 0;
      for (std::size_t q = 0; q < parents.size(); ++q)
        combo |= static_cast<std::size_t>(states(r, parents[q])) << q;
      ++counts[combo][static_cast<std::size_t>(states(r, i))];
    }
    rule.truth_table.assign(combos, 0);
    for (std::size_t combo = 0; combo < combos; ++combo) {
      std::size_t zeros = counts[combo][0];
      std::size_t ones = counts[combo][1];
      if (zeros + ones == 0) {
        InterventionSpec spec;
        for (std::size_t q = 0; q < parents.size(); ++q)
          spec.add_do(parents[q], static_cast<int>((combo >> q) & 1u));
        const Matrix queried = unfold_predict(model, ds.features, spec).states;
        for (std::size_t r = 0; r < ds.rows(); ++r) ++(queried(r, i) != 0.0 ? ones : zeros);
      }
      rule.truth_table[combo] = ones >= zeros ? 1 : 0;
    }
    rule.formula = minimize_sop(rule.truth_table, rule.parents);
    rules.push_back(rule);
  }
  return rules;
}

std::string cace_csv(const std::vector<std::string>& names,
                     const std::vector<std::vector<double>>& table) {
  std::string out = "cause,effect,value\n";
  char buf[64];
  for (std::size_t r = 0; r < table.size(); ++r) {
    for (std::size_t i = 0; i < table[r].size(); ++i) {
      if (r == i) continue;
      std::snprintf(buf, sizeof(buf), "%.17g", table[r][i]);
      out += names[r] + "," + names[i] + "," + buf + "\n";
    }
  }
  return out;
}

}  // namespace ccgm::engine
