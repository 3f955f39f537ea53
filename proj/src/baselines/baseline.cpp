#include "ccgm/baselines/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ccgm/diffcore/optim.hpp"
#include "ccgm/model/cgm.hpp"

namespace ccgm::baselines {

namespace {

using diff::Tape;
using diff::Var;

constexpr double kLeakySlope = 0.01;

std::string idx(const std::string& prefix, std::size_t i, const std::string& suffix) {
  return prefix + "." + std::to_string(i) + "." + suffix;
}

}  // namespace

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kBlackbox:
      return "blackbox";
    case BaselineKind::kCbm:
      return "cbm";
    case BaselineKind::kCem:
      return "cem";
  }
  return "unknown";
}

BaselineKind parse_kind(const std::string& name) {
  if (name == "blackbox") return BaselineKind::kBlackbox;
  if (name == "cbm") return BaselineKind::kCbm;
  if (name == "cem") return BaselineKind::kCem;
  throw std::invalid_argument("unknown baseline kind '" + name + "' (expected blackbox, cbm, cem)");
}

Matrix BaselinePrediction::all() const {
  Matrix out(task.rows(), concepts.cols() + 1);
  for (std::size_t r = 0; r < task.rows(); ++r) {
    for (std::size_t c = 0; c < concepts.cols(); ++c) out(r, c) = concepts(r, c);
    out(r, concepts.cols()) = task(r, 0);
  }
  return out;
}

BaselineModel::BaselineModel(BaselineKind kind, model::CgmConfig config,
                             std::vector<std::string> names)
    : kind_(kind), config_(std::move(config)), names_(std::move(names)) {
  config_.validate();
  if (config_.k < 2) throw std::invalid_argument("baseline: need at least one concept and a task");
  if (names_.size() != config_.k) throw std::invalid_argument("baseline: one name per label column");
  const std::size_t k = config_.k;
  const std::size_t c = k - 1;
  const std::size_t d = config_.d;
  const std::size_t h = config_.hidden_dim;
  const std::size_t m = config_.embed_dim;
  std::seed_seq seq{config_.seed, std::uint64_t{31}, static_cast<std::uint64_t>(kind)};
  std::mt19937_64 rng(seq);
  auto add = [&](std::string name, std::size_t rows, std::size_t cols, std::size_t fan_in) {
    params_.emplace_back(std::move(name), diff::uniform_init(rows, cols, fan_in, rng));
  };
  switch (kind_) {
    case BaselineKind::kBlackbox:
      add("l1.W", d, h, d);
      add("l1.b", 1, h, d);
      add("l2.W", h, h, h);
      add("l2.b", 1, h, h);
      add("out.W", h, k, h);
      add("out.b", 1, k, h);
      break;
    case BaselineKind::kCbm:
      add("concept.l1.W", d, h, d);
      add("concept.l1.b", 1, h, d);
      add("concept.out.W", h, c, h);
      add("concept.out.b", 1, c, h);
      add("task.l1.W", c, h, c);
      add("task.l1.b", 1, h, c);
      add("task.out.W", h, 1, h);
      add("task.out.b", 1, 1, h);
      break;
    case BaselineKind::kCem:
      add("encoder.W", d, h, d);
      add("encoder.b", 1, h, d);
      for (std::size_t i = 0; i < c; ++i) {
        add(idx("concept", i, "pos.W"), h, m, h);
        add(idx("concept", i, "pos.b"), 1, m, h);
        add(idx("concept", i, "neg.W"), h, m, h);
        add(idx("concept", i, "neg.b"), 1, m, h);
      }
      add("scorer.W", 2 * m, 1, 2 * m);
      add("scorer.b", 1, 1, 2 * m);
      add("task.l1.W", c * m, h, c * m);
      add("task.l1.b", 1, h, c * m);
      add("task.out.W", h, 1, h);
      add("task.out.b", 1, 1, h);
      break;
  }
}

std::vector<diff::ParamBlock*> BaselineModel::params() {
  std::vector<diff::ParamBlock*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const diff::ParamBlock*> BaselineModel::params() const {
  std::vector<const diff::ParamBlock*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

diff::ParamBlock& BaselineModel::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::invalid_argument("unknown parameter block: " + name);
}

Var BaselineModel::bind(Tape& tape, const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name != name) continue;
    if (tape.recording()) return tape.param(const_cast<diff::ParamBlock&>(p));
    return tape.constant(p.value);
  }
  throw std::invalid_argument("unknown parameter block: " + name);
}

// Returns the B x k logits. For cbm/cem the concept columns are the concept
// logits and the last column is the task logit computed from (possibly
// corrected) concepts.
Var BaselineModel::forward(Tape& tape, Var x, const std::map<std::size_t, Matrix>* corrections,
                           Var* concept_logits) const {
  if (x.cols() != config_.d) {
    throw std::invalid_argument("baseline: expected feature dim " + std::to_string(config_.d) +
                                ", got " + std::to_string(x.cols()));
  }
  auto dense = [&](Var in, const std::string& prefix) {
    return tape.add_row(tape.matmul(in, bind(tape, prefix + ".W")), bind(tape, prefix + ".b"));
  };
  const std::size_t c = concept_count();
  if (kind_ == BaselineKind::kBlackbox) {
    Var h1 = tape.relu(dense(x, "l1"));
    Var h2 = tape.relu(dense(h1, "l2"));
    return dense(h2, "out");
  }
  if (kind_ == BaselineKind::kCbm) {
    Var logits = dense(tape.relu(dense(x, "concept.l1")), "concept.out");
    Var probs = tape.sigmoid(logits);
    if (corrections != nullptr && !corrections->empty()) {
      Matrix fixed = probs.value();
      for (const auto& [i, col] : *corrections)
        for (std::size_t r = 0; r < fixed.rows(); ++r) fixed(r, i) = col(r, 0);
      probs = tape.constant(std::move(fixed));
    }
    Var task = dense(tape.relu(dense(probs, "task.l1")), "task.out");
    if (concept_logits != nullptr) *concept_logits = logits;
    const Var parts[] = {logits, task};
    return tape.concat_cols(parts);
  }
  Var h = tape.relu(dense(x, "encoder"));
  std::vector<Var> logits;
  std::vector<Var> mixed;
  for (std::size_t i = 0; i < c; ++i) {
    Var pos = tape.leaky_relu(dense(h, idx("concept", i, "pos")), kLeakySlope);
    Var neg = tape.leaky_relu(dense(h, idx("concept", i, "neg")), kLeakySlope);
    const Var pair[] = {pos, neg};
    Var logit = dense(tape.concat_cols(pair), "scorer");
    logits.push_back(logit);
    Var weight = tape.sigmoid(logit);
    if (corrections != nullptr) {
      auto it = corrections->find(i);
      if (it != corrections->end()) weight = tape.constant(it->second);
    }
    mixed.push_back(tape.mix(weight, pos, neg));
  }
  Var task = dense(tape.relu(dense(tape.concat_cols(mixed), "task.l1")), "task.out");
  Var concept_block = tape.concat_cols(logits);
  if (concept_logits != nullptr) *concept_logits = concept_block;
  const Var parts[] = {concept_block, task};
  return tape.concat_cols(parts);
}

BaselinePrediction BaselineModel::predict(const Matrix& x) const { return intervene(x, {}); }

BaselinePrediction BaselineModel::intervene(const Matrix& x,
                                            const std::map<std::size_t, Matrix>& corrections) const {
  if (kind_ == BaselineKind::kBlackbox && !corrections.empty()) {
    throw std::invalid_argument("blackbox models have no concept interface to intervene on");
  }
  const std::size_t c = concept_count();
  for (const auto& [i, col] : corrections) {
    if (i >= c) throw std::invalid_argument("intervene: concept index out of range");
    if (col.rows() != x.rows() || col.cols() != 1) {
      throw std::invalid_argument("intervene: correction must be a B x 1 column");
    }
    for (double v : col.values())
      if (v != 0.0 && v != 1.0) throw std::invalid_argument("intervene: labels must be 0 or 1");
  }
  Tape tape(false);
  const Matrix logits = forward(tape, tape.constant(x), &corrections, nullptr).value();
  BaselinePrediction out;
  out.concepts = Matrix(x.rows(), c);
  out.task = Matrix(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t i = 0; i < c; ++i) out.concepts(r, i) = diff::sigmoid(logits(r, i));
    out.task(r, 0) = diff::sigmoid(logits(r, c));
  }
  for (const auto& [i, col] : corrections)
    for (std::size_t r = 0; r < x.rows(); ++r) out.concepts(r, i) = col(r, 0);
  return out;
}

double BaselineModel::training_step(const Matrix& x, const Matrix& labels) {
  if (x.rows() == 0) throw std::invalid_argument("training_step: empty batch");
  if (labels.rows() != x.rows() || labels.cols() != config_.k) {
    throw std::invalid_argument("training_step: labels must be B x k");
  }
  Tape tape;
  Var logits = forward(tape, tape.constant(x), nullptr, nullptr);
  const std::size_t c = concept_count();
  Var loss;
  if (kind_ == BaselineKind::kBlackbox) {
    loss = tape.bce_with_logits(logits, labels);
  } else {
    Matrix concept_labels(labels.rows(), c);
    Matrix task_labels(labels.rows(), 1);
    for (std::size_t r = 0; r < labels.rows(); ++r) {
      for (std::size_t i = 0; i < c; ++i) concept_labels(r, i) = labels(r, i);
      task_labels(r, 0) = labels(r, c);
    }
    Var concept_loss = tape.bce_with_logits(tape.slice_cols(logits, 0, c), concept_labels);
    Var task_loss = tape.bce_with_logits(tape.slice_cols(logits, c, 1), task_labels);
    loss = tape.add(concept_loss, task_loss);
  }
  const double value = loss.scalar();
  if (!std::isfinite(value)) return std::numeric_limits<double>::quiet_NaN();
  tape.backward(loss);
  auto blocks = params();
  diff::sgd_step(blocks, config_.lr);
  return value;
}

double baseline_accuracy(const BaselineModel& model, const data::ConceptDataset& ds) {
  return model::joint_accuracy(model.predict(ds.features).all(), ds.labels);
}

BaselineTrainResult train_baseline(BaselineKind kind, const data::ConceptDataset& train,
                                   const data::ConceptDataset& val,
                                   const model::CgmConfig& config) {
  if (train.rows() == 0 || val.rows() == 0) throw std::invalid_argument("train_baseline: empty split");
  if (train.concept_count() != config.k || train.feature_dim() != config.d) {
    throw std::invalid_argument("train_baseline: dataset shape does not match config");
  }
  BaselineTrainResult result;
  result.model = BaselineModel(kind, config, train.concept_names);
  BaselineModel best = result.model;
  double best_acc = -1.0;
  std::seed_seq seq{config.seed, std::uint64_t{41}, static_cast<std::uint64_t>(kind)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(train.rows());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      const double loss = result.model.training_step(diff::take_rows(train.features, rows),
                                                     diff::take_rows(train.labels, rows));
      if (std::isfinite(loss)) {
        sum += loss;
        ++batches;
      }
    }
    result.train_loss.push_back(batches > 0 ? sum / static_cast<double>(batches) : 0.0);
    const double acc = baseline_accuracy(result.model, val);
    result.val_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      best = result.model;
      result.best_epoch = epoch;
    }
  }
  if (config.epochs > 0) result.model = std::move(best);
  return result;
}

model::Checkpoint to_checkpoint(const BaselineModel& model, const nlohmann::json& metrics) {
  model::Checkpoint ckpt;
  ckpt.kind = to_string(model.kind());
  ckpt.concept_names = model.concept_names();
  ckpt.config = model.config().to_json();
  for (const auto* p : model.params()) ckpt.params.push_back(*p);
  ckpt.seed = model.config().seed;
  ckpt.metrics = metrics.is_null() ? nlohmann::json::object() : metrics;
  return ckpt;
}

BaselineModel baseline_from_checkpoint(const model::Checkpoint& ckpt) {
  const BaselineKind kind = parse_kind(ckpt.kind);
  BaselineModel m(kind, model::CgmConfig::from_json(ckpt.config), ckpt.concept_names);
  if (ckpt.params.size() != m.params().size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(ckpt.params.size()) +
                             " parameter blocks, " + ckpt.kind + " expects " +
                             std::to_string(m.params().size()));
  }
  for (const auto& p : ckpt.params) {
    auto& dst = m.param(p.name);
    if (!dst.value.same_shape(p.value)) {
      throw std::runtime_error("param " + p.name + " has shape " + p.value.shape_string() +
                               ", expected " + dst.value.shape_string());
    }
    dst.value = p.value;
  }
  return m;
}

}  // namespace ccgm::baselines
