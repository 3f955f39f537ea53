#include "props/properties.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ccgm/graph/adjacency.hpp"
#include "ccgm/model/checkpoint.hpp"

namespace ccgm::props {

namespace {

using diff::Matrix;
using diff::ParamBlock;
using diff::Tape;
using diff::Var;
using engine::InterventionSpec;

std::set<std::size_t> descendants_of(const graph::Dag& dag, std::size_t node) {
  std::set<std::size_t> seen;
  std::vector<std::size_t> stack{node};
  while (!stack.empty()) {
    const std::size_t n = stack.back();
    stack.pop_back();
    for (const auto& e : dag.edges()) {
      if (e.parent == n && seen.insert(e.child).second) stack.push_back(e.child);
    }
  }
  return seen;
}

std::set<std::size_t> ancestors_of(const graph::Dag& dag, std::size_t node) {
  std::set<std::size_t> seen;
  std::vector<std::size_t> stack{node};
  while (!stack.empty()) {
    const std::size_t n = stack.back();
    stack.pop_back();
    for (const auto& e : dag.edges()) {
      if (e.child == n && seen.insert(e.parent).second) stack.push_back(e.parent);
    }
  }
  return seen;
}

bool column_equal(const Matrix& a, const Matrix& b, std::size_t col) {
  for (std::size_t r = 0; r < a.rows(); ++r)
    if (!bit_equal(a(r, col), b(r, col))) return false;
  return true;
}

void fail(CheckResult& r, const std::string& detail) {
  if (r.passed) r.detail = detail;
  r.passed = false;
}

Matrix uniform(std::size_t rows, std::size_t cols, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

// Entries pushed away from zero so relu/abs kinks are never straddled.
Matrix away_from_zero(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Matrix m = uniform(rows, cols, 0.1, 1.0, rng);
  std::bernoulli_distribution sign(0.5);
  for (double& v : m.values())
    if (sign(rng)) v = -v;
  return m;
}

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-2});
}

using OpFn = std::function<Var(Tape&, std::vector<Var>&)>;

// Projects a non-scalar output onto fixed random weights, so every output
// entry contributes to the checked gradient.
double check_op(const OpFn& op, std::vector<Matrix> inputs, std::mt19937_64& rng) {
  std::vector<ParamBlock> blocks;
  for (std::size_t i = 0; i < inputs.size(); ++i) blocks.emplace_back("in" + std::to_string(i), inputs[i]);
  Matrix proj;
  auto loss_of = [&](Tape& tape, std::vector<Var>& vars) {
    Var out = op(tape, vars);
    if (out.rows() == 1 && out.cols() == 1) return out;
    if (proj.empty()) proj = uniform(out.rows(), out.cols(), -1.0, 1.0, rng);
    return tape.sum(tape.mul(out, tape.constant(proj)));
  };
  {
    Tape tape;
    std::vector<Var> vars;
    for (auto& b : blocks) vars.push_back(tape.param(b));
    tape.backward(loss_of(tape, vars));
  }
  auto eval = [&]() {
    Tape tape(false);
    std::vector<Var> vars;
    for (auto& b : blocks) vars.push_back(tape.constant(b.value));
    return loss_of(tape, vars).scalar();
  };
  const double h = 1e-6;
  double worst = 0.0;
  for (auto& b : blocks) {
    for (std::size_t i = 0; i < b.value.size(); ++i) {
      const double saved = b.value[i];
      b.value[i] = saved + h;
      const double up = eval();
      b.value[i] = saved - h;
      const double down = eval();
      b.value[i] = saved;
      const double analytic = b.grad.empty() ? 0.0 : b.grad[i];
      worst = std::max(worst, rel_err(analytic, (up - down) / (2 * h)));
    }
  }
  return worst;
}

// Copies BCE plus teacher-forced endogenous BCE over a fixed adjacency.
Var cgm_loss(Tape& tape, const model::CgmModel& m, const Matrix& x, const Matrix& y, const Matrix& a) {
  model::Exogenous exo = m.encode(tape, tape.constant(x));
  std::vector<Var> emb;
  Var loss = tape.constant_scalar(0.0);
  for (std::size_t i = 0; i < m.k(); ++i) {
    Matrix yi(y.rows(), 1);
    for (std::size_t r = 0; r < y.rows(); ++r) yi(r, 0) = y(r, i);
    loss = tape.add(loss, tape.bce_with_logits(m.copy_logit(tape, exo.pos[i], exo.neg[i]), yi));
    emb.push_back(tape.mix(tape.constant(yi), exo.pos[i], exo.neg[i]));
  }
  Var av = tape.constant(a);
  for (std::size_t i = 0; i < m.k(); ++i) {
    Matrix yi(y.rows(), 1);
    for (std::size_t r = 0; r < y.rows(); ++r) yi(r, 0) = y(r, i);
    loss = tape.add(loss, tape.bce_with_logits(m.endogenous_logit(tape, i, av, emb), yi));
  }
  return loss;
}

double check_model(std::mt19937_64& rng) {
  model::CgmConfig cfg;
  cfg.k = 3;
  cfg.d = 4;
  cfg.hidden_dim = 6;
  cfg.embed_dim = 3;
  cfg.seed = 5;
  model::CgmModel m(cfg, {"a", "b", "c"});
  const Matrix x = uniform(5, 4, -1.0, 1.0, rng);
  Matrix y(5, 3);
  std::bernoulli_distribution coin(0.5);
  for (double& v : y.values()) v = coin(rng) ? 1.0 : 0.0;
  Matrix a = uniform(3, 3, 0.2, 1.0, rng);
  for (std::size_t i = 0; i < 3; ++i) a(i, i) = 0.0;

  for (auto* p : m.network_params()) p->zero_grad();
  {
    Tape tape;
    tape.backward(cgm_loss(tape, m, x, y, a));
  }
  auto eval = [&]() {
    Tape tape(false);
    return cgm_loss(tape, m, x, y, a).scalar();
  };
  const double h = 1e-6;
  double worst = 0.0;
  for (auto* p : m.network_params()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = eval();
      p->value[i] = saved - h;
      const double down = eval();
      p->value[i] = saved;
      worst = std::max(worst, rel_err(p->grad[i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

Matrix adjacency_from_mask(std::size_t k, std::uint64_t mask) {
  Matrix a(k, k);
  std::size_t bit = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      if ((mask >> bit) & 1U) a(i, j) = 1.0;
      ++bit;
    }
  }
  return a;
}

std::string describe(const Matrix& a) {
  std::ostringstream out;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0.0) out << j << "->" << i << " ";
  }
  return out.str();
}

}  // namespace

bool bit_equal(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

bool bit_equal(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bit_equal(a[i], b[i])) return false;
  return true;
}

bool closure_has_cycle(const Matrix& a) {
  const std::size_t k = a.rows();
  std::vector<std::vector<bool>> reach(k, std::vector<bool>(k, false));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) reach[j][i] = a(i, j) != 0.0;  // j reaches i
  for (std::size_t m = 0; m < k; ++m)
    for (std::size_t s = 0; s < k; ++s)
      for (std::size_t t = 0; t < k; ++t)
        if (reach[s][m] && reach[m][t]) reach[s][t] = true;
  for (std::size_t i = 0; i < k; ++i)
    if (reach[i][i]) return true;
  return false;
}

bool permutation_acyclic(const Matrix& a) {
  std::vector<std::size_t> perm(a.rows());
  std::iota(perm.begin(), perm.end(), 0);
  do {
    std::vector<std::size_t> pos(perm.size());
    for (std::size_t p = 0; p < perm.size(); ++p) pos[perm[p]] = p;
    bool forward = true;
    for (std::size_t i = 0; i < a.rows() && forward; ++i)
      for (std::size_t j = 0; j < a.cols() && forward; ++j)
        if (a(i, j) != 0.0 && pos[j] >= pos[i]) forward = false;
    if (forward) return true;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return false;
}

CheckResult gradient_checks(double tolerance) {
  CheckResult r{"gradient checks", true, ""};
  std::mt19937_64 rng(2024);
  auto m = [&](std::size_t rows, std::size_t cols) { return away_from_zero(rows, cols, rng); };
  std::vector<std::pair<std::string, std::pair<OpFn, std::vector<Matrix>>>> cases;
  auto add = [&](std::string name, OpFn f, std::vector<Matrix> in) {
    cases.push_back({std::move(name), {std::move(f), std::move(in)}});
  };
  add("add", [](Tape& t, std::vector<Var>& v) { return t.add(v[0], v[1]); }, {m(3, 4), m(3, 4)});
  add("sub", [](Tape& t, std::vector<Var>& v) { return t.sub(v[0], v[1]); }, {m(3, 4), m(3, 4)});
  add("mul", [](Tape& t, std::vector<Var>& v) { return t.mul(v[0], v[1]); }, {m(3, 4), m(3, 4)});
  add("add_row", [](Tape& t, std::vector<Var>& v) { return t.add_row(v[0], v[1]); }, {m(3, 4), m(1, 4)});
  add("mul_col", [](Tape& t, std::vector<Var>& v) { return t.mul_col(v[0], v[1]); }, {m(3, 1), m(3, 4)});
  add("scale", [](Tape& t, std::vector<Var>& v) { return t.scale(v[0], 1.7); }, {m(2, 3)});
  add("add_scalar", [](Tape& t, std::vector<Var>& v) { return t.add_scalar(v[0], 0.3); }, {m(2, 3)});
  add("scale_by", [](Tape& t, std::vector<Var>& v) { return t.scale_by(v[0], v[1]); }, {m(1, 1), m(2, 3)});
  add("matmul", [](Tape& t, std::vector<Var>& v) { return t.matmul(v[0], v[1]); }, {m(3, 4), m(4, 2)});
  add("sigmoid", [](Tape& t, std::vector<Var>& v) { return t.sigmoid(v[0]); }, {m(3, 3)});
  add("relu", [](Tape& t, std::vector<Var>& v) { return t.relu(v[0]); }, {m(3, 3)});
  add("leaky_relu", [](Tape& t, std::vector<Var>& v) { return t.leaky_relu(v[0], 0.01); }, {m(3, 3)});
  add("log", [](Tape& t, std::vector<Var>& v) { return t.log(v[0]); }, {uniform(3, 3, 0.5, 2.0, rng)});
  add("abs", [](Tape& t, std::vector<Var>& v) { return t.abs(v[0]); }, {m(3, 3)});
  add("square", [](Tape& t, std::vector<Var>& v) { return t.square(v[0]); }, {m(3, 3)});
  add("sum", [](Tape& t, std::vector<Var>& v) { return t.sum(t.square(v[0])); }, {m(3, 3)});
  add("mean", [](Tape& t, std::vector<Var>& v) { return t.mean(t.square(v[0])); }, {m(3, 3)});
  add("concat_cols", [](Tape& t, std::vector<Var>& v) { return t.concat_cols(std::span<const Var>(v)); },
      {m(3, 2), m(3, 1)});
  add("slice_cols", [](Tape& t, std::vector<Var>& v) { return t.slice_cols(v[0], 1, 2); }, {m(3, 4)});
  add("element", [](Tape& t, std::vector<Var>& v) { return t.square(t.element(v[0], 1, 2)); }, {m(3, 4)});
  add("trace_power", [](Tape& t, std::vector<Var>& v) { return t.trace_power(v[0], 3); }, {m(3, 3)});
  {
    Matrix targets(4, 1);
    targets(1, 0) = 1.0;
    targets(2, 0) = 1.0;
    add("bce_with_logits", [targets](Tape& t, std::vector<Var>& v) { return t.bce_with_logits(v[0], targets); },
        {m(4, 1)});
  }
  add("mix", [](Tape& t, std::vector<Var>& v) { return t.mix(v[0], v[1], v[2]); },
      {uniform(3, 1, 0.1, 0.9, rng), m(3, 2), m(3, 2)});
  add("weighted_sum",
      [](Tape& t, std::vector<Var>& v) {
        std::span<const Var> parts(v.data() + 1, 3);
        return t.weighted_sum(v[0], 1, parts);
      },
      {m(3, 3), m(2, 2), m(2, 2), m(2, 2)});
  add("acyclicity_penalty", [](Tape& t, std::vector<Var>& v) { return graph::acyclicity_penalty(t, v[0], 1.0); },
      {uniform(4, 4, 0.1, 1.0, rng)});

  for (auto& [name, c] : cases) {
    const double err = check_op(c.first, c.second, rng);
    if (!(err < tolerance)) fail(r, name + " rel err " + std::to_string(err));
  }
  const double model_err = check_model(rng);
  if (!(model_err < tolerance)) fail(r, "cgm loss rel err " + std::to_string(model_err));
  if (r.passed) r.detail = std::to_string(cases.size()) + " ops + cgm loss";
  return r;
}

CheckResult cycle_oracle(std::size_t random_cases, std::uint64_t seed) {
  CheckResult r{"acyclicity oracle", true, ""};
  std::size_t checked = 0;
  auto check = [&](const Matrix& a) {
    const bool cyclic = closure_has_cycle(a);
    ++checked;
    if (cyclic == permutation_acyclic(a)) fail(r, "oracles disagree on " + describe(a));
    const bool penalty_zero = graph::acyclicity_penalty(a, 1.0) <= 1e-10;
    if (penalty_zero == cyclic) fail(r, "penalty disagrees on " + describe(a));
    if (graph::has_cycle(a) != cyclic) fail(r, "has_cycle disagrees on " + describe(a));
  };
  for (std::size_t k = 1; k <= 4; ++k) {
    const std::size_t bits = k * (k - 1);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << bits); ++mask) check(adjacency_from_mask(k, mask));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> density(0.05, 0.35);
  // Weights of order one: the penalty of a long cycle shrinks with the
  // product of its squared weights.
  std::uniform_real_distribution<double> weight(1.0, 2.0);
  for (std::size_t c = 0; c < random_cases; ++c) {
    const double p = density(rng);
    std::bernoulli_distribution edge(p);
    Matrix a(8, 8);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        if (i != j && edge(rng)) a(i, j) = weight(rng);
    const bool cyclic = closure_has_cycle(a);
    ++checked;
    if ((graph::acyclicity_penalty(a, 1.0) <= 1e-10) == cyclic) fail(r, "penalty disagrees on " + describe(a));
    if (graph::has_cycle(a) != cyclic) fail(r, "has_cycle disagrees on " + describe(a));
    const graph::Dag dag = graph::extract_dag(a, std::vector<std::string>(8, ""));
    Matrix kept(8, 8);
    for (const auto& e : dag.edges()) kept(e.child, e.parent) = 1.0;
    if (closure_has_cycle(kept)) fail(r, "extract_dag left a cycle in " + describe(a));
  }
  if (r.passed) r.detail = std::to_string(checked) + " graphs";
  return r;
}

CheckResult do_invariance(const model::CgmModel& model, const Matrix& x, std::size_t specs, std::uint64_t seed) {
  CheckResult r{"do-invariance", true, ""};
  const graph::Dag dag = model.dag();
  const std::size_t k = model.k();
  const Matrix base = engine::unfold_predict(model, x).probs;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> count(1, std::min<std::size_t>(3, k));
  std::uniform_int_distribution<int> kind(0, 5);
  std::bernoulli_distribution bit(0.5);
  for (std::size_t s = 0; s < specs; ++s) {
    std::vector<std::size_t> nodes(k);
    std::iota(nodes.begin(), nodes.end(), 0);
    std::shuffle(nodes.begin(), nodes.end(), rng);
    nodes.resize(count(rng));
    InterventionSpec spec;
    std::set<std::size_t> touched;
    for (std::size_t n : nodes) {
      const int kd = kind(rng);
      if (kd == 0) spec.add_block(n);
      else if (kd == 1) spec.add_ground_truth(n, bit(rng) ? 1 : 0);
      else spec.add_do(n, bit(rng) ? 1 : 0);
      touched.insert(n);
      for (std::size_t d : descendants_of(dag, n)) touched.insert(d);
    }
    const Matrix after = engine::unfold_predict(model, x, spec).probs;
    for (std::size_t i = 0; i < k; ++i) {
      if (touched.contains(i)) continue;
      if (!column_equal(base, after, i)) {
        fail(r, "node " + model.concept_names()[i] + " changed under " +
                    spec.to_json(model.concept_names()).dump());
      }
    }
  }
  if (r.passed) r.detail = std::to_string(x.rows()) + " samples x " + std::to_string(specs) + " specs";
  return r;
}

CheckResult ancestor_immunity(const model::CgmModel& model, const Matrix& x) {
  CheckResult r{"ancestor immunity", true, ""};
  const graph::Dag dag = model.dag();
  const Matrix base = engine::unfold_predict(model, x).probs;
  for (std::size_t j = 0; j < model.k(); ++j) {
    for (int kappa : {0, 1}) {
      const Matrix after = engine::unfold_predict(model, x, InterventionSpec().add_do(j, kappa)).probs;
      for (std::size_t a : ancestors_of(dag, j)) {
        if (!column_equal(base, after, a)) {
          fail(r, "do(" + model.concept_names()[j] + ") moved ancestor " + model.concept_names()[a]);
        }
      }
    }
  }
  return r;
}

CheckResult counterfactual_empty(const model::CgmModel& model, const Matrix& x) {
  CheckResult r{"counterfactual empty spec", true, ""};
  const auto report = engine::counterfactual_query(model, x, {});
  if (!bit_equal(report.counterfactual, report.factual)) fail(r, "counterfactual differs from factual");
  if (!bit_equal(report.factual, engine::unfold_predict(model, x).probs)) fail(r, "factual differs from unfold");
  for (double v : report.effect.values())
    if (!bit_equal(v, 0.0)) fail(r, "non-zero effect");
  return r;
}

CheckResult sweep_idempotence(const model::CgmModel& model, const Matrix& x) {
  CheckResult r{"unfolding idempotence", true, ""};
  const auto one = engine::unfold_predict(model, x, {}, 1);
  for (int sweeps : {2, 3}) {
    const auto more = engine::unfold_predict(model, x, {}, sweeps);
    if (!bit_equal(one.probs, more.probs)) fail(r, std::to_string(sweeps) + " sweeps changed probabilities");
    for (std::size_t i = 0; i < one.embeddings.size(); ++i)
      if (!bit_equal(one.embeddings[i], more.embeddings[i])) fail(r, std::to_string(sweeps) + " sweeps changed embeddings");
  }
  return r;
}

CheckResult path_equivalence(const model::CgmModel& model, const Matrix& x, std::uint64_t seed) {
  CheckResult r{"training/inference path equivalence", true, ""};
  const graph::Dag dag = model.dag();
  const Matrix a = dag.weight_matrix();
  const std::size_t k = model.k();

  // Soft parent values taken from the unfolded run itself.
  const Matrix unfolded = engine::unfold_predict(model, x).probs;
  const Matrix forced = model.teacher_forced(x, unfolded, a);
  if (!bit_equal(forced, unfolded)) fail(r, "teacher-forced pass differs on unfolded values");

  // Random binary parent values imposed on every other node.
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution bit(0.5);
  Matrix values(x.rows(), k);
  for (double& v : values.values()) v = bit(rng) ? 1.0 : 0.0;
  const Matrix tf = model.teacher_forced(x, values, a);
  for (std::size_t i = 0; i < k; ++i) {
    InterventionSpec spec;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      Matrix col(x.rows(), 1);
      for (std::size_t row = 0; row < x.rows(); ++row) col(row, 0) = values(row, j);
      spec.add_ground_truth(j, std::move(col));
    }
    const Matrix inferred = engine::unfold_predict(model, x, spec).probs;
    if (!column_equal(tf, inferred, i)) fail(r, "node " + model.concept_names()[i] + " differs");
  }
  return r;
}

CheckResult pns_range(const model::CgmModel& model, const Matrix& x) {
  CheckResult r{"PNS bounds", true, ""};
  const graph::Dag dag = model.dag();
  const double n = static_cast<double>(x.rows());
  for (std::size_t c = 0; c < model.k(); ++c) {
    const auto desc = descendants_of(dag, c);
    std::vector<double> p1_col(model.k(), 0.0);
    std::vector<double> p0_col(model.k(), 0.0);
    const Matrix one = engine::unfold_predict(model, x, InterventionSpec().add_do(c, 1)).probs;
    const Matrix zero = engine::unfold_predict(model, x, InterventionSpec().add_do(c, 0)).probs;
    for (std::size_t e = 0; e < model.k(); ++e) {
      for (std::size_t row = 0; row < x.rows(); ++row) {
        p1_col[e] += one(row, e);
        p0_col[e] += zero(row, e);
      }
    }
    for (std::size_t e = 0; e < model.k(); ++e) {
      if (e == c) continue;
      for (auto dir : {engine::PnsDirection::kCauseOneEffectOne, engine::PnsDirection::kCauseZeroEffectOne}) {
        const auto b = engine::pns_bounds(model, x, c, e, dir);
        const std::string tag = model.concept_names()[c] + "->" + model.concept_names()[e];
        if (!(0.0 <= b.lower && b.lower <= b.upper && b.upper <= 1.0)) fail(r, "range violated for " + tag);
        if (!desc.contains(e)) {
          if (b.connected || b.lower != 0.0 || b.upper != 0.0) fail(r, "disconnected pair not flagged: " + tag);
          continue;
        }
        const double p1 = p1_col[e] / n;
        const double p0 = p0_col[e] / n;
        double lower = std::max(0.0, p1 - p0);
        double upper = std::min(p1, 1.0 - p0);
        if (dir == engine::PnsDirection::kCauseZeroEffectOne) {
          lower = std::max(0.0, p0 - p1);
          upper = std::min(p0, 1.0 - p1);
        }
        if (std::abs(lower - b.lower) > 1e-12 || std::abs(upper - b.upper) > 1e-12) {
          fail(r, "Tian-Pearl formula mismatch for " + tag);
        }
      }
    }
  }
  return r;
}

CheckResult checkpoint_round_trip(const model::CgmModel& model, const Matrix& x) {
  CheckResult r{"checkpoint round trip", true, ""};
  const auto path = std::filesystem::temp_directory_path() /
                    ("ccgm_props_" + std::to_string(std::random_device{}()) + ".json");
  model::save_cgm(model, path);
  const model::CgmModel loaded = model::load_cgm(path);
  std::filesystem::remove(path);
  const auto a = model.network_params();
  const auto b = loaded.network_params();
  if (a.size() != b.size()) fail(r, "parameter count changed");
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (a[i]->name != b[i]->name || !bit_equal(a[i]->value, b[i]->value)) fail(r, "block " + a[i]->name + " changed");
  }
  if (!bit_equal(model.adjacency().weights().value, loaded.adjacency().weights().value)) fail(r, "M changed");
  if (!bit_equal(model.adjacency().gamma_value(), loaded.adjacency().gamma_value())) fail(r, "gamma changed");
  if (!bit_equal(engine::unfold_predict(model, x).probs, engine::unfold_predict(loaded, x).probs)) {
    fail(r, "predictions changed");
  }
  return r;
}

model::CgmModel tabular_three_node_model() {
  constexpr double S = 1000.0;
  model::CgmConfig cfg;
  cfg.k = 3;
  cfg.d = 3;
  cfg.hidden_dim = 3;
  cfg.embed_dim = 2;
  cfg.graph_mode = model::GraphMode::kFixed;
  cfg.fixed_edges = {{0, 1, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}};
  model::CgmModel m(cfg, {"v0", "v1", "v2"});
  for (auto* p : m.network_params()) p->value.fill(0.0);
  m.param("encoder.W").value = Matrix::identity(3);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string c = "concept." + std::to_string(i);
    // pos = [1, x_i], neg = [0, x_i]: the first embedding slot carries the value.
    m.param(c + ".pos.W").value(i, 1) = 1.0;
    m.param(c + ".pos.b").value(0, 0) = 1.0;
    m.param(c + ".neg.W").value(i, 1) = 1.0;
  }
  // copy logit S*(2 x_i - 1)
  m.param("scorer.W").value(1, 0) = S;
  m.param("scorer.W").value(3, 0) = S;
  m.param("scorer.b").value(0, 0) = -S;
  // hidden = [relu(s), relu(s - 1), 0] with s the summed parent values
  m.param("aggregator.W").value(0, 0) = 1.0;
  m.param("aggregator.W").value(0, 1) = 1.0;
  m.param("aggregator.b").value(0, 1) = -1.0;
  // v1 = not v0
  m.param("head.1.W").value(0, 0) = -2 * S;
  m.param("head.1.b").value(0, 0) = S;
  // v2 = v0 and v1
  m.param("head.2.W").value(1, 0) = 2 * S;
  m.param("head.2.b").value(0, 0) = -S;
  return m;
}

CheckResult brute_force_oracle() {
  CheckResult r{"3-node brute-force oracle", true, ""};
  const model::CgmModel m = tabular_three_node_model();
  Matrix x(8, 3);
  for (std::size_t s = 0; s < 8; ++s)
    for (std::size_t j = 0; j < 3; ++j) x(s, j) = static_cast<double>((s >> j) & 1U);

  const std::vector<std::pair<std::size_t, std::size_t>> edges{{0, 1}, {0, 2}, {1, 2}};
  // value[j]: -1 none, 0/1 do; block: -1 none or node.
  auto oracle = [&](std::size_t s, const std::array<int, 3>& value, int block) {
    const int x0 = static_cast<int>(x(s, 0));
    const std::array<int, 3> factual{x0, 1 - x0, x0 & (1 - x0)};
    std::array<int, 3> pin{-1, -1, -1};
    if (block >= 0) {
      for (auto [p, c] : edges)
        if (static_cast<int>(p) == block && value[c] < 0) pin[c] = factual[c];
    }
    auto pick = [&](std::size_t j, int computed) {
      if (value[j] >= 0) return value[j];
      if (pin[j] >= 0) return pin[j];
      return computed;
    };
    std::array<int, 3> v{};
    v[0] = pick(0, x0);
    v[1] = pick(1, 1 - v[0]);
    v[2] = pick(2, v[0] & v[1]);
    return v;
  };

  std::size_t specs = 0;
  for (int code = 0; code < 27; ++code) {
    const std::array<int, 3> value{code % 3 - 1, (code / 3) % 3 - 1, code / 9 - 1};
    for (int block = -1; block < 3; ++block) {
      InterventionSpec spec;
      for (std::size_t j = 0; j < 3; ++j)
        if (value[j] >= 0) spec.add_do(j, value[j]);
      if (block >= 0) spec.add_block(static_cast<std::size_t>(block));
      const Matrix probs = engine::unfold_predict(m, x, spec).probs;
      ++specs;
      for (std::size_t s = 0; s < 8; ++s) {
        const auto v = oracle(s, value, block);
        for (std::size_t j = 0; j < 3; ++j) {
          if (!bit_equal(probs(s, j), static_cast<double>(v[j]))) {
            fail(r, "unfold mismatch at input " + std::to_string(s) + " node " + std::to_string(j) + " spec " +
                        spec.to_json(m.concept_names()).dump());
          }
        }
      }
    }
  }
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t e = 0; e < 3; ++e) {
      if (c == e) continue;
      double total = 0.0;
      std::array<int, 3> one{-1, -1, -1};
      std::array<int, 3> zero{-1, -1, -1};
      one[c] = 1;
      zero[c] = 0;
      for (std::size_t s = 0; s < 8; ++s) total += std::abs(oracle(s, one, -1)[e] - oracle(s, zero, -1)[e]);
      const double expected = total / 8.0;
      const double got = engine::cace(m, x, c, e);
      if (!bit_equal(got, expected)) {
        fail(r, "cace " + std::to_string(c) + "->" + std::to_string(e) + " = " + std::to_string(got) +
                    ", oracle " + std::to_string(expected));
      }
    }
  }
  if (r.passed) r.detail = std::to_string(specs) + " specs x 8 inputs";
  return r;
}

CheckResult complement_bounds(const std::vector<engine::PnsBounds>& bounds) {
  CheckResult r{"deterministic complement PNS", true, ""};
  if (bounds.empty()) fail(r, "no qualifying model");
  for (const auto& b : bounds) {
    if (!(b.lower >= 0.95 && b.lower <= 1.0 && b.upper >= 0.95 && b.upper <= 1.0)) {
      fail(r, "bounds [" + std::to_string(b.lower) + ", " + std::to_string(b.upper) + "] outside [0.95, 1]");
    }
  }
  return r;
}

}  // namespace ccgm::props
