#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ccgm/datagen/dataset.hpp"
#include "ccgm/diffcore/tape.hpp"
#include "ccgm/model/checkpoint.hpp"
#include "ccgm/model/config.hpp"

namespace ccgm::baselines {

using diff::Matrix;

enum class BaselineKind { kBlackbox, kCbm, kCem };

std::string to_string(BaselineKind kind);
// Throws std::invalid_argument for anything but blackbox, cbm, cem.
BaselineKind parse_kind(const std::string& name);

// All k label columns; the last one is the task.
struct BaselinePrediction {
  Matrix concepts;  // B x (k-1)
  Matrix task;      // B x 1
  Matrix all() const;
};

class BaselineModel {
 public:
  BaselineModel() = default;
  // Uses k, d, hidden_dim, embed_dim, lr, epochs, batch_size and seed from the config.
  BaselineModel(BaselineKind kind, model::CgmConfig config, std::vector<std::string> names);

  BaselineKind kind() const { return kind_; }
  const model::CgmConfig& config() const { return config_; }
  const std::vector<std::string>& concept_names() const { return names_; }
  std::size_t concept_count() const { return config_.k - 1; }

  BaselinePrediction predict(const Matrix& x) const;
  // corrections: concept index -> B x 1 column of labels. Rejected for blackbox.
  BaselinePrediction intervene(const Matrix& x, const std::map<std::size_t, Matrix>& corrections) const;

  // One joint SGD step; returns the loss, or NaN if the step was skipped.
  double training_step(const Matrix& x, const Matrix& labels);

  std::vector<diff::ParamBlock*> params();
  std::vector<const diff::ParamBlock*> params() const;
  diff::ParamBlock& param(const std::string& name);

 private:
  diff::Var forward(diff::Tape& tape, diff::Var x, const std::map<std::size_t, Matrix>* corrections,
                    diff::Var* concept_logits) const;
  diff::Var bind(diff::Tape& tape, const std::string& name) const;

  BaselineKind kind_ = BaselineKind::kBlackbox;
  model::CgmConfig config_;
  std::vector<std::string> names_;
  std::vector<diff::ParamBlock> params_;
};

struct BaselineTrainResult {
  BaselineModel model;
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
  std::size_t best_epoch = 0;
};

// Joint training, concept and task losses weighted 1; the snapshot with the
// best validation joint accuracy is kept (ties: earliest epoch).
BaselineTrainResult train_baseline(BaselineKind kind, const data::ConceptDataset& train,
                                   const data::ConceptDataset& val, const model::CgmConfig& config);

double baseline_accuracy(const BaselineModel& model, const data::ConceptDataset& ds);

model::Checkpoint to_checkpoint(const BaselineModel& model, const nlohmann::json& metrics = {});
BaselineModel baseline_from_checkpoint(const model::Checkpoint& ckpt);

}  // namespace ccgm::baselines
