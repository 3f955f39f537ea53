#include "ccgm/model/cgm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ccgm/diffcore/optim.hpp"

namespace ccgm::model {

namespace {

constexpr double kLeakySlope = 0.01;

// Block layout inside CgmModel::params_.
constexpr std::size_t kEncW = 0;
constexpr std::size_t kEncB = 1;
std::size_t pos_w(std::size_t i) { return 2 + 4 * i; }
std::size_t pos_b(std::size_t i) { return 3 + 4 * i; }
std::size_t neg_w(std::size_t i) { return 4 + 4 * i; }
std::size_t neg_b(std::size_t i) { return 5 + 4 * i; }
std::size_t shared_base(std::size_t k) { return 2 + 4 * k; }
std::size_t scorer_w(std::size_t k) { return shared_base(k); }
std::size_t scorer_b(std::size_t k) { return shared_base(k) + 1; }
std::size_t agg_w(std::size_t k) { return shared_base(k) + 2; }
std::size_t agg_b(std::size_t k) { return shared_base(k) + 3; }
std::size_t head_w(std::size_t k, std::size_t i) { return shared_base(k) + 4 + 2 * i; }
std::size_t head_b(std::size_t k, std::size_t i) { return shared_base(k) + 5 + 2 * i; }

bool row_is_zero(const Matrix& a, std::size_t i) {
  for (std::size_t j = 0; j < a.cols(); ++j)
    if (j != i && a(i, j) != 0.0) return false;
  return true;
}

Matrix column_of(const Matrix& m, std::size_t c) {
  Matrix out(m.rows(), 1);
  for (std::size_t r = 0; r < m.rows(); ++r) out(r, 0) = m(r, c);
  return out;
}

}  // namespace

CgmModel::CgmModel(CgmConfig config, std::vector<std::string> concept_names)
    : config_(std::move(config)), names_(std::move(concept_names)) {
  config_.validate();
  if (names_.size() != config_.k) {
    throw std::invalid_argument("CgmModel: expected " + std::to_string(config_.k) +
                                " concept names, got " + std::to_string(names_.size()));
  }
  const std::size_t k = config_.k;
  const std::size_t d = config_.d;
  const std::size_t h = config_.hidden_dim;
  const std::size_t m = config_.embed_dim;
  std::seed_seq seq{config_.seed, std::uint64_t{11}};
  std::mt19937_64 rng(seq);
  auto add = [&](std::string name, std::size_t rows, std::size_t cols, std::size_t fan_in) {
    params_.emplace_back(std::move(name), diff::uniform_init(rows, cols, fan_in, rng));
  };
  add("encoder.W", d, h, d);
  add("encoder.b", 1, h, d);
  for (std::size_t i = 0; i < k; ++i) {
    const std::string p = "concept." + std::to_string(i);
    add(p + ".pos.W", h, m, h);
    add(p + ".pos.b", 1, m, h);
    add(p + ".neg.W", h, m, h);
    add(p + ".neg.b", 1, m, h);
  }
  add("scorer.W", 2 * m, 1, 2 * m);
  add("scorer.b", 1, 1, 2 * m);
  add("aggregator.W", m, h, m);
  add("aggregator.b", 1, h, m);
  for (std::size_t i = 0; i < k; ++i) {
    const std::string p = "head." + std::to_string(i);
    add(p + ".W", h, 1, h);
    add(p + ".b", 1, 1, h);
  }
  adjacency_ = graph::AdjacencyState(k, config_.gamma_init);
  if (config_.graph_mode == GraphMode::kFixed) freeze_graph(config_.fixed_edges);
}

std::size_t CgmModel::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::invalid_argument("unknown node: " + name);
  return static_cast<std::size_t>(it - names_.begin());
}

graph::Dag CgmModel::dag() const { return graph::extract_dag(adjacency_matrix(), names_); }

std::vector<ParamBlock*> CgmModel::network_params() {
  std::vector<ParamBlock*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const ParamBlock*> CgmModel::network_params() const {
  std::vector<const ParamBlock*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<ParamBlock*> CgmModel::trainable_params() {
  auto out = network_params();
  if (!adjacency_.fully_fixed()) {
    out.push_back(&adjacency_.weights());
    out.push_back(&adjacency_.gamma());
  }
  return out;
}

ParamBlock& CgmModel::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::invalid_argument("unknown parameter block: " + name);
}

const ParamBlock& CgmModel::param(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw std::invalid_argument("unknown parameter block: " + name);
}

void CgmModel::freeze_graph(const std::vector<FixedGraphEdge>& edges) {
  std::vector<graph::AdjacencyState::FixedEdge> fixed;
  for (const auto& e : edges) fixed.push_back({e.parent, e.child, e.weight});
  adjacency_.freeze_to(fixed);
  config_.graph_mode = GraphMode::kFixed;
  config_.fixed_edges = edges;
}

Var CgmModel::bind(Tape& tape, std::size_t block) const {
  if (tape.recording()) return tape.param(const_cast<ParamBlock&>(params_[block]));
  return tape.constant(params_[block].value);
}

Exogenous CgmModel::encode(Tape& tape, Var x) const {
  if (x.cols() != config_.d) {
    throw std::invalid_argument("encode: expected feature dim " + std::to_string(config_.d) +
                                ", got " + std::to_string(x.cols()));
  }
  Var h = tape.relu(tape.add_row(tape.matmul(x, bind(tape, kEncW)), bind(tape, kEncB)));
  Exogenous out;
  for (std::size_t i = 0; i < config_.k; ++i) {
    out.pos.push_back(tape.leaky_relu(
        tape.add_row(tape.matmul(h, bind(tape, pos_w(i))), bind(tape, pos_b(i))), kLeakySlope));
    out.neg.push_back(tape.leaky_relu(
        tape.add_row(tape.matmul(h, bind(tape, neg_w(i))), bind(tape, neg_b(i))), kLeakySlope));
  }
  return out;
}

Var CgmModel::copy_logit(Tape& tape, Var pos, Var neg) const {
  const Var parts[] = {pos, neg};
  Var u = tape.concat_cols(parts);
  const std::size_t k = config_.k;
  return tape.add_row(tape.matmul(u, bind(tape, scorer_w(k))), bind(tape, scorer_b(k)));
}

Var CgmModel::endogenous_logit(Tape& tape, std::size_t i, Var a,
                               std::span<const Var> embeddings) const {
  return head_logit(tape, i, tape.weighted_sum(a, i, embeddings));
}

Var CgmModel::head_logit(Tape& tape, std::size_t i, Var aggregated) const {
  const std::size_t k = config_.k;
  Var hidden =
      tape.relu(tape.add_row(tape.matmul(aggregated, bind(tape, agg_w(k))), bind(tape, agg_b(k))));
  return tape.add_row(tape.matmul(hidden, bind(tape, head_w(k, i))), bind(tape, head_b(k, i)));
}

std::vector<Matrix> CgmModel::encode_exogenous(std::span<const double> x) const {
  if (x.size() != config_.d) {
    throw std::invalid_argument("encode_exogenous: expected feature dim " +
                                std::to_string(config_.d) + ", got " + std::to_string(x.size()));
  }
  for (double v : x)
    if (!std::isfinite(v)) throw std::invalid_argument("encode_exogenous: non-finite feature");
  Tape tape(false);
  Exogenous exo = encode(tape, tape.constant(Matrix::row_vector(x)));
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < config_.k; ++i) {
    const Var parts[] = {exo.pos[i], exo.neg[i]};
    out.push_back(tape.concat_cols(parts).value());
  }
  return out;
}

double CgmModel::predict_copy(std::span<const double> u) const {
  const std::size_t m = config_.embed_dim;
  if (u.size() != 2 * m) throw std::invalid_argument("predict_copy: u must have length 2m");
  Tape tape(false);
  Var pos = tape.constant(Matrix::row_vector(u.subspan(0, m)));
  Var neg = tape.constant(Matrix::row_vector(u.subspan(m, m)));
  return tape.sigmoid(copy_logit(tape, pos, neg)).scalar();
}

double CgmModel::predict_endogenous(std::size_t i, std::span<const Matrix> embeddings,
                                    const Matrix& a, std::span<const double> u_i) const {
  const std::size_t k = config_.k;
  if (i >= k || embeddings.size() != k || a.rows() != k || a.cols() != k) {
    throw std::invalid_argument("predict_endogenous: node or shape out of range");
  }
  if (row_is_zero(a, i)) return predict_copy(u_i);
  Tape tape(false);
  std::vector<Var> embs;
  for (const auto& e : embeddings) embs.push_back(tape.constant(e));
  return tape.sigmoid(endogenous_logit(tape, i, tape.constant(a), embs)).scalar();
}

UnfoldOutput CgmModel::unfold(const Matrix& x, const graph::Dag& dag,
                              std::span<const std::optional<Matrix>> overrides,
                              int sweeps) const {
  const std::size_t k = config_.k;
  if (dag.size() != k) throw std::invalid_argument("unfold: graph size does not match model");
  if (!overrides.empty() && overrides.size() != k) {
    throw std::invalid_argument("unfold: need one override slot per node");
  }
  if (sweeps < 1) throw std::invalid_argument("unfold: sweeps must be >= 1");
  const std::size_t b = x.rows();
  Tape tape(false);
  Exogenous exo = encode(tape, tape.constant(x));
  Var a = tape.constant(dag.weight_matrix());
  std::vector<Var> emb(k, tape.constant(Matrix(b, config_.embed_dim)));
  std::vector<Matrix> probs(k);
  for (int s = 0; s < sweeps; ++s) {
    for (std::size_t i : dag.topo_order()) {
      if (!overrides.empty() && overrides[i].has_value()) {
        const Matrix& v = *overrides[i];
        if (v.rows() != b || v.cols() != 1) {
          throw std::invalid_argument("unfold: override for node " + names_[i] + " has shape " +
                                      v.shape_string());
        }
        probs[i] = v;
      } else if (dag.parents(i).empty()) {
        if (s == 0) probs[i] = tape.sigmoid(copy_logit(tape, exo.pos[i], exo.neg[i])).value();
      } else {
        probs[i] = tape.sigmoid(endogenous_logit(tape, i, a, emb)).value();
      }
      emb[i] = tape.mix(tape.constant(probs[i]), exo.pos[i], exo.neg[i]);
    }
  }
  UnfoldOutput out;
  out.probs = Matrix(b, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t r = 0; r < b; ++r) out.probs(r, i) = probs[i](r, 0);
    out.embeddings.push_back(emb[i].value());
  }
  return out;
}

Matrix CgmModel::teacher_forced(const Matrix& x, const Matrix& parent_values,
                                const Matrix& a) const {
  const std::size_t k = config_.k;
  if (parent_values.cols() != k || parent_values.rows() != x.rows()) {
    throw std::invalid_argument("teacher_forced: parent values must be B x k");
  }
  Tape tape(false);
  Exogenous exo = encode(tape, tape.constant(x));
  Var av = tape.constant(a);
  std::vector<Var> emb;
  for (std::size_t j = 0; j < k; ++j) {
    emb.push_back(tape.mix(tape.constant(column_of(parent_values, j)), exo.pos[j], exo.neg[j]));
  }
  Matrix out(x.rows(), k);
  for (std::size_t i = 0; i < k; ++i) {
    Var logit = row_is_zero(a, i) ? copy_logit(tape, exo.pos[i], exo.neg[i])
                                  : endogenous_logit(tape, i, av, emb);
    const Matrix p = tape.sigmoid(logit).value();
    for (std::size_t r = 0; r < x.rows(); ++r) out(r, i) = p(r, 0);
  }
  return out;
}

LossBreakdown CgmModel::training_step(const Matrix& x, const Matrix& labels,
                                      std::mt19937_64& rng) {
  const std::size_t k = config_.k;
  const std::size_t b = x.rows();
  if (b == 0) throw std::invalid_argument("training_step: empty batch");
  if (labels.rows() != b || labels.cols() != k) {
    throw std::invalid_argument("training_step: labels must be B x k");
  }
  for (double v : labels.values())
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("training_step: labels must be binary");

  Tape tape;
  Exogenous exo = encode(tape, tape.constant(x));
  Var a = adjacency_.masked_var(tape);
  const Matrix av = a.value();

  std::vector<Var> copy_logits;
  std::vector<Var> label_emb;
  std::vector<Matrix> label_cols;
  for (std::size_t j = 0; j < k; ++j) {
    copy_logits.push_back(copy_logit(tape, exo.pos[j], exo.neg[j]));
    label_cols.push_back(column_of(labels, j));
    label_emb.push_back(tape.mix(tape.constant(label_cols[j]), exo.pos[j], exo.neg[j]));
  }
  std::vector<Var> endo_logits;
  for (std::size_t i = 0; i < k; ++i) {
    endo_logits.push_back(row_is_zero(av, i) ? copy_logits[i]
                                             : endogenous_logit(tape, i, a, label_emb));
  }
  Var copies = tape.bce_with_logits(tape.concat_cols(copy_logits), labels);
  Var endo = tape.bce_with_logits(tape.concat_cols(endo_logits), labels);
  Var acyc = graph::acyclicity_penalty(tape, a, config_.beta);

  Var total = tape.add(copies, tape.add(tape.scale(endo, config_.lambda1),
                                        tape.scale(acyc, config_.lambda2)));
  double cace_value = 0.0;
  if (config_.lambda3 > 0.0 && k > 1) {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::vector<std::size_t> r(b);
    for (auto& v : r) v = pick(rng);
    std::vector<Var> probs[2];
    for (int kappa = 0; kappa < 2; ++kappa) {
      std::vector<Var> emb = label_emb;
      for (std::size_t j = 0; j < k; ++j) {
        if (std::find(r.begin(), r.end(), j) == r.end()) continue;
        Matrix col = label_cols[j];
        for (std::size_t s = 0; s < b; ++s)
          if (r[s] == j) col(s, 0) = kappa;
        emb[j] = tape.mix(tape.constant(std::move(col)), exo.pos[j], exo.neg[j]);
      }
      for (std::size_t i = 0; i < k; ++i) {
        if (row_is_zero(av, i)) continue;
        probs[kappa].push_back(tape.sigmoid(endogenous_logit(tape, i, a, emb)));
      }
    }
    Var acc;
    bool have = false;
    std::size_t slot = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (row_is_zero(av, i)) continue;
      Matrix keep(b, 1);
      for (std::size_t s = 0; s < b; ++s) keep(s, 0) = r[s] == i ? 0.0 : 1.0;
      Var diff = tape.abs(tape.sub(probs[1][slot], probs[0][slot]));
      Var term = tape.mul(diff, tape.constant(std::move(keep)));
      acc = have ? tape.add(acc, term) : term;
      have = true;
      ++slot;
    }
    if (have) {
      Var cace = tape.scale(tape.mean(acc), 1.0 / static_cast<double>(k - 1));
      cace_value = cace.scalar();
      total = tape.sub(total, tape.scale(cace, config_.lambda3));
    }
  }

  LossBreakdown out;
  out.copies = copies.scalar();
  out.endogenous = endo.scalar();
  out.acyclicity = acyc.scalar();
  out.cace = cace_value;
  out.total = total.scalar();
  auto params = trainable_params();
  if (!std::isfinite(out.total)) {
    out.applied = false;
    return out;
  }
  tape.backward(total);
  const auto report = diff::sgd_step(params, config_.lr);
  out.rejected_blocks = report.rejected_blocks;
  out.applied = report.ok();
  adjacency_.project();
  return out;
}

std::vector<double> mix_endogenous_embedding(double v, std::span<const double> pos,
                                             std::span<const double> neg) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("mix: value must lie in [0,1]");
  if (pos.size() != neg.size()) throw std::invalid_argument("mix: embedding sizes differ");
  std::vector<double> out(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) out[i] = v * pos[i] + (1.0 - v) * neg[i];
  return out;
}

double joint_accuracy(const Matrix& probs, const Matrix& labels) {
  if (!probs.same_shape(labels) || probs.empty()) {
    throw std::invalid_argument("joint_accuracy: shape mismatch or empty input");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double hard = probs[i] >= 0.5 ? 1.0 : 0.0;
    hits += hard == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

double unfolded_accuracy(const CgmModel& model, const data::ConceptDataset& ds) {
  const auto out = model.unfold(ds.features, model.dag(), {});
  return joint_accuracy(out.probs, ds.labels);
}

CgmConfig config_for(const data::ConceptDataset& ds, CgmConfig base) {
  base.k = ds.concept_count();
  base.d = ds.feature_dim();
  return base;
}

TrainResult train_cgm(const data::ConceptDataset& train, const data::ConceptDataset& val,
                      const CgmConfig& config) {
  if (train.rows() == 0) throw std::invalid_argument("train: empty training set");
  if (val.rows() == 0) throw std::invalid_argument("train: empty validation set");
  if (train.concept_count() != config.k || train.feature_dim() != config.d) {
    throw std::invalid_argument("train: dataset shape does not match config");
  }
  TrainResult result;
  result.model = CgmModel(config, train.concept_names);
  CgmModel& model = result.model;
  if (config.graph_mode == GraphMode::kLearned) {
    model.adjacency() = graph::AdjacencyState(graph::entropy_init(train.labels), config.gamma_init);
  }
  CgmModel best = model;
  double best_acc = -1.0;

  std::seed_seq seq{config.seed, std::uint64_t{21}};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(train.rows());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      const auto loss = model.training_step(diff::take_rows(train.features, rows),
                                            diff::take_rows(train.labels, rows), rng);
      if (!loss.applied) ++rec.aborted_steps;
      if (!std::isfinite(loss.total)) continue;
      rec.copies += loss.copies;
      rec.endogenous += loss.endogenous;
      rec.acyclicity += loss.acyclicity;
      rec.cace += loss.cace;
      rec.total += loss.total;
      ++batches;
    }
    if (batches > 0) {
      const double n = static_cast<double>(batches);
      rec.copies /= n;
      rec.endogenous /= n;
      rec.acyclicity /= n;
      rec.cace /= n;
      rec.total /= n;
    }
    rec.val_accuracy = unfolded_accuracy(model, val);
    if (rec.val_accuracy > best_acc) {
      best_acc = rec.val_accuracy;
      best = model;
      result.best_epoch = epoch;
    }
    result.history.push_back(rec);
  }
  if (config.epochs > 0) model = std::move(best);
  result.best_val_accuracy = config.epochs > 0 ? best_acc : unfolded_accuracy(model, val);
  return result;
}

}  // namespace ccgm::model
