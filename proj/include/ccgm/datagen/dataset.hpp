#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccgm/diffcore/matrix.hpp"
#include "json.hpp"

namespace ccgm::data {

// Directed edge between two label columns: parent -> child.
struct LabelEdge {
  std::size_t parent = 0;
  std::size_t child = 0;
  friend bool operator==(const LabelEdge&, const LabelEdge&) = default;
  friend auto operator<=>(const LabelEdge&, const LabelEdge&) = default;
};

// Feature matrix plus binary labels over named variables. By convention the
// last label column is the task; the others are concepts.
struct ConceptDataset {
  diff::Matrix features;  // n x d
  diff::Matrix labels;    // n x k, entries 0/1
  std::vector<std::string> concept_names;
  std::optional<std::vector<LabelEdge>> ground_truth_graph;
  std::uint64_t seed = 0;
  nlohmann::json generator = nlohmann::json::object();

  std::size_t rows() const { return features.rows(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t concept_count() const { return labels.cols(); }

  // Throws std::invalid_argument when an invariant does not hold.
  void validate() const;
  ConceptDataset subset(std::span<const std::size_t> rows) const;
  std::size_t index_of(const std::string& name) const;
};

ConceptDataset gen_checkmark(std::size_t n, std::uint64_t seed);

// Structural equation over binary variables. The truth table is indexed by the
// parent values (parent q contributes bit q) plus the exogenous noise bit as
// the most significant bit; the noise bit is 1 with probability noise_prob.
struct StructuralEquation {
  std::vector<std::size_t> parents;
  std::vector<int> table;
  double noise_prob = 0.5;

  int evaluate(std::span<const int> values, int noise) const;
};

struct GroundTruthScm {
  std::vector<std::string> variables;
  std::vector<StructuralEquation> equations;
  std::size_t nuisance_dims = 2;
  double value_jitter = 0.0;  // std-dev of Gaussian noise added to each value feature

  void validate() const;  // rejects cycles and malformed tables
  std::vector<std::size_t> ancestral_order() const;
  std::vector<LabelEdge> edges() const;
};

// Root variable taking value 1 with probability p.
StructuralEquation root_equation(double p);
// Deterministic equation: value = rule(parent values), no exogenous noise.
StructuralEquation deterministic_equation(std::vector<std::size_t> parents,
                                          int (*rule)(std::span<const int>));

// shape(heart), size(large), vertical(top), horizontal(right), colour(red), label.
GroundTruthScm dsprites_lite_scm();

ConceptDataset gen_scm_dataset(const GroundTruthScm& scm, std::size_t n, std::uint64_t seed,
                               double label_noise);

// Task over `factors` latent binary factors; only ceil((1-ratio)*factors) of
// them are exposed as concept columns, followed by the task column.
ConceptDataset gen_incompleteness(std::size_t n, std::uint64_t seed, double ratio,
                                  std::size_t factors = 10);

std::array<ConceptDataset, 3> split_dataset(const ConceptDataset& ds,
                                            std::array<double, 3> fractions, std::uint64_t seed);

// Row indices of each part, as used by split_dataset.
std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n,
                                                      std::array<double, 3> fractions,
                                                      std::uint64_t seed);

ConceptDataset perturb_features(const ConceptDataset& ds, double strength, std::uint64_t seed);

// CSV with header x_0..x_{d-1},v_0..v_{k-1} plus a JSON sidecar at
// `<path>.meta.json`.
void write_csv(const ConceptDataset& ds, const std::filesystem::path& path);
ConceptDataset read_csv(const std::filesystem::path& path);
std::filesystem::path metadata_path(const std::filesystem::path& csv_path);

std::string edge_string(const std::vector<std::string>& names, const LabelEdge& e);

}  // namespace ccgm::data
