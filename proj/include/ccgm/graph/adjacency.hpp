#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "ccgm/diffcore/tape.hpp"

namespace ccgm::graph {

using diff::Matrix;

// Convention: entry (i, j) is the strength of the edge from parent j into child i.

enum class EdgeConstraint { kFree, kForcedZero, kForcedValue };

struct EdgeRule {
  EdgeConstraint kind = EdgeConstraint::kFree;
  double value = 0.0;  // used by kForcedValue
};

// Learnable weights M, learnable threshold gamma and per-entry constraints.
// The diagonal is always forced to zero.
class AdjacencyState {
 public:
  static constexpr double kSurrogateTemperature = 0.1;

  AdjacencyState() = default;
  explicit AdjacencyState(std::size_t k, double gamma = 0.1);
  AdjacencyState(Matrix weights, double gamma);

  std::size_t size() const { return weights_.value.rows(); }
  diff::ParamBlock& weights() { return weights_; }
  const diff::ParamBlock& weights() const { return weights_; }
  diff::ParamBlock& gamma() { return gamma_; }
  const diff::ParamBlock& gamma() const { return gamma_; }
  double gamma_value() const { return gamma_.value(0, 0); }

  const EdgeRule& rule(std::size_t i, std::size_t j) const { return rules_[i * size() + j]; }
  void set_rule(std::size_t i, std::size_t j, EdgeRule rule);
  // Every entry becomes forced: the listed (parent -> child, weight) edges take
  // their weight, everything else is forced to zero.
  struct FixedEdge {
    std::size_t parent;
    std::size_t child;
    double weight;
  };
  void freeze_to(const std::vector<FixedEdge>& edges);
  bool fully_fixed() const;

  // Hard-masked matrix A (forward value only).
  Matrix masked() const;

  // A as a tape node; gradients reach M and gamma through the sigmoid surrogate.
  diff::Var masked_var(diff::Tape& tape);

  // Zeroes the diagonal and forced entries of M, and clamps free entries at 0.
  void project();

 private:
  diff::ParamBlock weights_;
  diff::ParamBlock gamma_;
  std::vector<EdgeRule> rules_;
};

// Hard threshold with straight-through surrogate gradient.
//   forward:  A = M * 1[M >= gamma]   (constraints applied)
//   backward: through S = M * sigmoid((M - gamma) / tau)
diff::Var threshold_mask(diff::Tape& tape, diff::Var weights, diff::Var gamma,
                         const std::vector<EdgeRule>& rules, double tau);

// Forward-only mask for plain matrices (no constraints beyond the diagonal).
Matrix apply_sparsity_mask(const Matrix& weights, double gamma);

// Tr((I + (beta/k) A o A)^k) - k, where o is the elementwise product.
diff::Var acyclicity_penalty(diff::Tape& tape, diff::Var a, double beta);
double acyclicity_penalty(const Matrix& a, double beta);

// Entry (i, j) = max(0, ln 2 - H(v_i | v_j)) from add-one smoothed counts.
Matrix entropy_init(const Matrix& labels);

}  // namespace ccgm::graph
