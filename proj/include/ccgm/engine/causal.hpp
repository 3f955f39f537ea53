#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ccgm/baselines/baseline.hpp"
#include "ccgm/datagen/dataset.hpp"
#include "ccgm/graph/dag.hpp"
#include "ccgm/model/cgm.hpp"
#include "json.hpp"

namespace ccgm::engine {

using diff::Matrix;
using model::CgmModel;

enum class ActionKind { kDo, kGroundTruth, kBlock };
enum class Provenance { kPredicted, kDo, kGroundTruth, kBlocked };

std::string to_string(ActionKind kind);
std::string to_string(Provenance p);

struct Action {
  std::size_t node = 0;
  ActionKind kind = ActionKind::kDo;
  int value = 0;  // kappa for do, label for a single-sample ground truth
  // Per-sample labels (B x 1) for batched ground-truth actions; overrides `value`.
  std::optional<Matrix> labels;
};

// Ordered actions, at most one per node.
class InterventionSpec {
 public:
  InterventionSpec& add_do(std::size_t node, int kappa);
  InterventionSpec& add_ground_truth(std::size_t node, int label);
  InterventionSpec& add_ground_truth(std::size_t node, Matrix labels);
  InterventionSpec& add_block(std::size_t node);

  const std::vector<Action>& actions() const { return actions_; }
  bool empty() const { return actions_.empty(); }
  bool only_do() const;
  const Action* find(std::size_t node) const;

  // [{"node": name, "kind": "do"|"ground_truth"|"block", "value": 0|1}]
  nlohmann::json to_json(const std::vector<std::string>& names) const;
  static InterventionSpec from_json(const nlohmann::json& j, const std::vector<std::string>& names);

 private:
  void push(Action a);
  std::vector<Action> actions_;
};

struct NodeState {
  double probability = 0.0;
  int state = 0;
  std::vector<double> embedding;
  Provenance provenance = Provenance::kPredicted;
};
using NodeStateVector = std::vector<NodeState>;

// Batched result of unfold_predict.
struct UnfoldResult {
  Matrix probs;                         // B x k soft probabilities
  Matrix states;                        // B x k hard states
  std::vector<Matrix> embeddings;       // k entries of B x m
  std::vector<Provenance> provenance;   // per node
  graph::Dag effective_graph;           // extracted DAG minus severed edges

  NodeStateVector sample(std::size_t row) const;
};

// Hard state with ties at exactly 0.5 going to 1.
inline int hard_state(double p) { return p >= 0.5 ? 1 : 0; }

// Unfolded inference under `spec`. Block(j) pins every child of j to the hard
// state predicted for that sample without any intervention; explicit actions
// on a child take precedence over the pin.
UnfoldResult unfold_predict(const CgmModel& model, const Matrix& x,
                            const InterventionSpec& spec = {}, int sweeps = 1);

std::pair<UnfoldResult, UnfoldResult> ground_truth_intervene(const CgmModel& model,
                                                              const Matrix& x,
                                                              const Matrix& labels,
                                                              const std::vector<std::size_t>& nodes);

struct CausalReport {
  std::string kind;
  std::vector<std::string> nodes;
  Matrix factual;         // B x k
  Matrix counterfactual;  // B x k
  Matrix effect;          // counterfactual - factual
  nlohmann::json spec;
  std::optional<std::pair<double, double>> bounds;

  nlohmann::json to_json() const;
};

// Abduction (deterministic encoder), action (edge removal), prediction (unfold).
// Throws if the spec holds anything but do actions.
CausalReport counterfactual_query(const CgmModel& model, const Matrix& x,
                                  const InterventionSpec& do_spec);

// Spec that blocks node j.
InterventionSpec block_node(const CgmModel& model, std::size_t j);

// mean over rows of |p(i | do(r=1)) - p(i | do(r=0))|, with `base` applied in
// both arms.
double cace(const CgmModel& model, const Matrix& x, std::size_t cause, std::size_t effect,
            const InterventionSpec& base = {});
// CaCE from `cause` to every node (entry `cause` is 0).
std::vector<double> cace_row(const CgmModel& model, const Matrix& x, std::size_t cause,
                             const InterventionSpec& base = {});

struct ResidualCace {
  double before = 0.0;
  double after = 0.0;
  double percent = 0.0;
  bool degenerate = false;
};

// Throws if cause is not an ancestor of effect in the model's DAG.
ResidualCace residual_cace(const CgmModel& model, const Matrix& x, std::size_t cause,
                           std::size_t effect);

// CBM analogue: `after` additionally corrects every non-task child of `cause`
// in `graph` to its predicted hard state; the CBM has no edge to remove.
ResidualCace cbm_residual_cace(const baselines::BaselineModel& cbm, const Matrix& x,
                               std::size_t cause, const std::vector<data::LabelEdge>& graph);

enum class PnsDirection { kCauseOneEffectOne, kCauseZeroEffectOne };

struct PnsBounds {
  double lower = 0.0;
  double upper = 0.0;
  double p1 = 0.0;  // mean p(effect=1 | do(cause=1))
  double p0 = 0.0;  // mean p(effect=1 | do(cause=0))
  bool connected = true;
};

PnsBounds pns_bounds(const CgmModel& model, const Matrix& x, std::size_t cause,
                     std::size_t effect, PnsDirection direction = PnsDirection::kCauseOneEffectOne);

struct CurveStep {
  std::size_t step = 0;
  std::vector<std::string> intervened;
  double delta_accuracy = 0.0;          // non-intervened labels
  double delta_concept_accuracy = 0.0;  // non-intervened concepts (task excluded)
};

struct CurveSeries {
  std::string model;
  std::vector<CurveStep> steps;
};

// Nodes ordered by descendant count (descending, ties by index).
std::vector<std::size_t> descendant_order(const graph::Dag& dag);

CurveSeries intervention_curve(const CgmModel& model, const data::ConceptDataset& ds,
                               std::size_t max_interventions);
CurveSeries intervention_curve(const baselines::BaselineModel& model,
                               const data::ConceptDataset& ds, std::size_t max_interventions);

struct NodeRule {
  std::string node;
  std::vector<std::string> parents;
  std::string formula;           // "ε" for roots
  std::vector<int> truth_table;  // indexed by parent bits, parent q -> bit q
  bool skipped = false;
  std::string notice;
};

inline constexpr std::size_t kMaxRuleParents = 12;

std::vector<NodeRule> extract_logic_rules(const CgmModel& model, const data::ConceptDataset& ds);

// Minimised sum of products over `vars` (bit q of a minterm is vars[q]).
// Uses "~", "&", "|", "True", "False".
std::string minimize_sop(const std::vector<int>& truth_table, const std::vector<std::string>& vars);

// CSV with header cause,effect,value
std::string cace_csv(const std::vector<std::string>& names, const std::vector<std::vector<double>>& table);

}  // namespace ccgm::engine
