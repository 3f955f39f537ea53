#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ccgm/datagen/dataset.hpp"
#include "ccgm/diffcore/tape.hpp"
#include "ccgm/graph/adjacency.hpp"
#include "ccgm/graph/dag.hpp"
#include "ccgm/model/config.hpp"

namespace ccgm::model {

using diff::Matrix;
using diff::ParamBlock;
using diff::Tape;
using diff::Var;

// Per-concept exogenous embeddings for a batch: pos[i], neg[i] are B x m.
struct Exogenous {
  std::vector<Var> pos;
  std::vector<Var> neg;
};

// Forward values of one unfolded pass over a batch.
struct UnfoldOutput {
  Matrix probs;                    // B x k
  std::vector<Matrix> embeddings;  // k entries of B x m
};

struct LossBreakdown {
  double copies = 0.0;
  double endogenous = 0.0;
  double acyclicity = 0.0;
  double cace = 0.0;
  double total = 0.0;
  bool applied = true;  // false when the step was aborted on a non-finite value
  std::vector<std::string> rejected_blocks;
};

class CgmModel {
 public:
  CgmModel() = default;
  // Random initialisation from config.seed.
  CgmModel(CgmConfig config, std::vector<std::string> concept_names);

  const CgmConfig& config() const { return config_; }
  const std::vector<std::string>& concept_names() const { return names_; }
  std::size_t k() const { return config_.k; }
  std::size_t embed_dim() const { return config_.embed_dim; }
  std::size_t index_of(const std::string& name) const;

  graph::AdjacencyState& adjacency() { return adjacency_; }
  const graph::AdjacencyState& adjacency() const { return adjacency_; }
  // Hard-masked A.
  Matrix adjacency_matrix() const { return adjacency_.masked(); }
  // extract_dag over the hard-masked A.
  graph::Dag dag() const;

  // Network parameters, excluding M and gamma.
  std::vector<ParamBlock*> network_params();
  std::vector<const ParamBlock*> network_params() const;
  // Everything SGD updates; M and gamma are left out in fixed-graph mode.
  std::vector<ParamBlock*> trainable_params();
  ParamBlock& param(const std::string& name);
  const ParamBlock& param(const std::string& name) const;

  // Graph building blocks. On a recording tape the parameters are bound as
  // ParamBlocks and receive gradients on backward(); otherwise they enter as
  // constants.
  Exogenous encode(Tape& tape, Var x) const;
  Var copy_logit(Tape& tape, Var pos, Var neg) const;
  // Logit of node i from A row i and one embedding per node (entry i unused).
  Var endogenous_logit(Tape& tape, std::size_t i, Var a, std::span<const Var> embeddings) const;
  // Shared inner map and node i's output head applied to an aggregated B x m input.
  Var head_logit(Tape& tape, std::size_t i, Var aggregated) const;

  // Single-sample helpers. u is [c+, c-] of length 2m.
  std::vector<Matrix> encode_exogenous(std::span<const double> x) const;
  double predict_copy(std::span<const double> u) const;
  // Uses row i of `a` over 1 x m embeddings; falls back to predict_copy(u_i)
  // when that row is all zero.
  double predict_endogenous(std::size_t i, std::span<const Matrix> embeddings, const Matrix& a,
                            std::span<const double> u_i) const;

  // Batched unfolded inference over `dag`. overrides[i], when set, is a B x 1
  // column of imposed values in [0,1]; that node ignores its parents. `sweeps`
  // repeats the topological pass.
  UnfoldOutput unfold(const Matrix& x, const graph::Dag& dag,
                      std::span<const std::optional<Matrix>> overrides, int sweeps = 1) const;
  // Teacher-forced pass: every node i with a non-zero row in `a` is predicted
  // from parents mixed at `parent_values` (B x k); other nodes take copy probs.
  Matrix teacher_forced(const Matrix& x, const Matrix& parent_values, const Matrix& a) const;

  LossBreakdown training_step(const Matrix& x, const Matrix& labels, std::mt19937_64& rng);

  void freeze_graph(const std::vector<FixedGraphEdge>& edges);

 private:
  Var bind(Tape& tape, std::size_t block) const;

  CgmConfig config_;
  std::vector<std::string> names_;
  std::vector<ParamBlock> params_;
  graph::AdjacencyState adjacency_;
};

// v*pos + (1-v)*neg. Throws std::invalid_argument when v is outside [0,1].
std::vector<double> mix_endogenous_embedding(double v, std::span<const double> pos,
                                             std::span<const double> neg);

struct EpochRecord {
  std::size_t epoch = 0;
  double copies = 0.0;
  double endogenous = 0.0;
  double acyclicity = 0.0;
  double cace = 0.0;
  double total = 0.0;
  double val_accuracy = 0.0;
  std::size_t aborted_steps = 0;
};

struct TrainResult {
  CgmModel model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
};

// Fraction of (sample, variable) entries whose hard prediction matches the label.
double joint_accuracy(const Matrix& probs, const Matrix& labels);
double unfolded_accuracy(const CgmModel& model, const data::ConceptDataset& ds);

TrainResult train_cgm(const data::ConceptDataset& train, const data::ConceptDataset& val,
                      const CgmConfig& config);

// Config with k and d taken from the dataset.
CgmConfig config_for(const data::ConceptDataset& ds, CgmConfig base);

}  // namespace ccgm::model
