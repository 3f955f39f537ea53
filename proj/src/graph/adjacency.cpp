#include "ccgm/graph/adjacency.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ccgm::graph {

AdjacencyState::AdjacencyState(std::size_t k, double gamma)
    : AdjacencyState(Matrix(k, k), gamma) {}

AdjacencyState::AdjacencyState(Matrix weights, double gamma) {
  if (weights.rows() == 0 || weights.rows() != weights.cols()) {
    throw std::invalid_argument("AdjacencyState: weights must be a non-empty square matrix");
  }
  const std::size_t k = weights.rows();
  weights_ = diff::ParamBlock("adjacency.M", std::move(weights));
  gamma_ = diff::ParamBlock("adjacency.gamma", Matrix(1, 1, gamma));
  rules_.assign(k * k, EdgeRule{});
  for (std::size_t i = 0; i < k; ++i) rules_[i * k + i] = {EdgeConstraint::kForcedZero, 0.0};
  project();
}

void AdjacencyState::set_rule(std::size_t i, std::size_t j, EdgeRule rule) {
  if (i >= size() || j >= size()) throw std::out_of_range("AdjacencyState::set_rule");
  if (i == j && !(rule.kind == EdgeConstraint::kForcedZero ||
                  (rule.kind == EdgeConstraint::kForcedValue && rule.value == 0.0))) {
    throw std::invalid_argument("AdjacencyState: self-loops are not allowed");
  }
  rules_[i * size() + j] = rule;
  project();
}

void AdjacencyState::freeze_to(const std::vector<FixedEdge>& edges) {
  const std::size_t k = size();
  for (auto& r : rules_) r = {EdgeConstraint::kForcedZero, 0.0};
  for (const auto& e : edges) {
    if (e.parent >= k || e.child >= k) throw std::out_of_range("freeze_to: edge out of range");
    if (e.parent == e.child) throw std::invalid_argument("freeze_to: self-loop");
    rules_[e.child * k + e.parent] = {EdgeConstraint::kForcedValue, e.weight};
  }
  project();
}

bool AdjacencyState::fully_fixed() const {
  return std::all_of(rules_.begin(), rules_.end(),
                     [](const EdgeRule& r) { return r.kind != EdgeConstraint::kFree; });
}

void AdjacencyState::project() {
  Matrix& m = weights_.value;
  for (std::size_t idx = 0; idx < rules_.size(); ++idx) {
    switch (rules_[idx].kind) {
      case EdgeConstraint::kForcedZero:
        m[idx] = 0.0;
        break;
      case EdgeConstraint::kForcedValue:
        m[idx] = rules_[idx].value;
        break;
      case EdgeConstraint::kFree:
        m[idx] = std::max(m[idx], 0.0);
        break;
    }
  }
}

Matrix AdjacencyState::masked() const {
  const Matrix& m = weights_.value;
  const double gamma = gamma_value();
  Matrix a(m.rows(), m.cols());
  for (std::size_t idx = 0; idx < rules_.size(); ++idx) {
    switch (rules_[idx].kind) {
      case EdgeConstraint::kForcedZero:
        break;
      case EdgeConstraint::kForcedValue:
        a[idx] = rules_[idx].value;
        break;
      case EdgeConstraint::kFree:
        a[idx] = m[idx] >= gamma ? m[idx] : 0.0;
        break;
    }
  }
  return a;
}

diff::Var AdjacencyState::masked_var(diff::Tape& tape) {
  if (fully_fixed() || !tape.recording()) return tape.constant(masked());
  diff::Var w = tape.param(weights_);
  diff::Var g = tape.param(gamma_);
  return threshold_mask(tape, w, g, rules_, kSurrogateTemperature);
}

diff::Var threshold_mask(diff::Tape& tape, diff::Var weights, diff::Var gamma,
                         const std::vector<EdgeRule>& rules, double tau) {
  const Matrix& m = weights.value();
  if (m.rows() != m.cols() || rules.size() != m.size()) {
    throw std::invalid_argument("threshold_mask: weights " + m.shape_string() +
                                " do not match constraint table");
  }
  const double gv = gamma.scalar();
  Matrix a(m.rows(), m.cols());
  for (std::size_t idx = 0; idx < m.size(); ++idx) {
    switch (rules[idx].kind) {
      case EdgeConstraint::kForcedZero:
        break;
      case EdgeConstraint::kForcedValue:
        a[idx] = rules[idx].value;
        break;
      case EdgeConstraint::kFree:
        a[idx] = m[idx] >= gv ? m[idx] : 0.0;
        break;
    }
  }
  return tape.record(
      "threshold_mask", std::move(a), {weights, gamma},
      [m, gv, rules, tau](const Matrix& g, std::span<Matrix* const> gi) {
        double dgamma = 0.0;
        for (std::size_t idx = 0; idx < m.size(); ++idx) {
          if (rules[idx].kind != EdgeConstraint::kFree) continue;
          const double s = diff::sigmoid((m[idx] - gv) / tau);
          const double ds = s * (1.0 - s) / tau;
          if (gi[0] != nullptr) (*gi[0])[idx] += g[idx] * (s + m[idx] * ds);
          dgamma -= g[idx] * m[idx] * ds;
        }
        if (gi[1] != nullptr) (*gi[1])(0, 0) += dgamma;
      });
}

Matrix apply_sparsity_mask(const Matrix& weights, double gamma) {
  Matrix a(weights.rows(), weights.cols());
  for (std::size_t i = 0; i < weights.rows(); ++i)
    for (std::size_t j = 0; j < weights.cols(); ++j)
      if (i != j && weights(i, j) >= gamma) a(i, j) = weights(i, j);
  return a;
}

diff::Var acyclicity_penalty(diff::Tape& tape, diff::Var a, double beta) {
  const std::size_t k = a.rows();
  if (a.cols() != k) throw std::invalid_argument("acyclicity_penalty: A must be square");
  diff::Var sq = tape.square(a);
  diff::Var scaled = tape.scale(sq, beta / static_cast<double>(k));
  diff::Var p = tape.add(scaled, tape.constant(Matrix::identity(k)));
  diff::Var tr = tape.trace_power(p, static_cast<int>(k));
  return tape.add_scalar(tr, -static_cast<double>(k));
}

double acyclicity_penalty(const Matrix& a, double beta) {
  diff::Tape tape(false);
  return acyclicity_penalty(tape, tape.constant(a), beta).scalar();
}

Matrix entropy_init(const Matrix& labels) {
  const std::size_t n = labels.rows();
  const std::size_t k = labels.cols();
  if (n < 2) throw std::invalid_argument("entropy_init: need at least 2 samples");
  Matrix m(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      double counts[2][2] = {{1.0, 1.0}, {1.0, 1.0}};  // [v_i][v_j], add-one smoothing
      for (std::size_t r = 0; r < n; ++r) {
        counts[labels(r, i) != 0.0][labels(r, j) != 0.0] += 1.0;
      }
      const double total = static_cast<double>(n) + 4.0;
      double h = 0.0;
      for (int c = 0; c < 2; ++c) {
        const double nc = counts[0][c] + counts[1][c];
        for (int b = 0; b < 2; ++b) {
          h -= (counts[b][c] / total) * std::log(counts[b][c] / nc);
        }
      }
      m(i, j) = std::max(0.0, std::numbers::ln2 - h);
    }
  }
  return m;
}

}  // namespace ccgm::graph
