#include "ccgm/engine/merge.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "ccgm/diffcore/optim.hpp"

namespace ccgm::engine {

namespace {

using diff::Tape;
using diff::Var;

Matrix columns(const Matrix& m, std::size_t start, std::size_t count) {
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = m(r, start + c);
  return out;
}

Matrix block(const Matrix& m, std::size_t start, std::size_t count) {
  Matrix out(count, count);
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = m(start + r, start + c);
  return out;
}

}  // namespace

ComposedModel::ComposedModel(CgmModel first, CgmModel second, std::vector<BridgeEdge> bridges)
    : first_(std::move(first)), second_(std::move(second)), bridges_(std::move(bridges)) {
  if (first_.embed_dim() != second_.embed_dim()) {
    throw std::invalid_argument("merge_models: embedding sizes differ (" +
                                std::to_string(first_.embed_dim()) + " vs " +
                                std::to_string(second_.embed_dim()) + ")");
  }
  names_ = first_.concept_names();
  for (const auto& n : second_.concept_names()) {
    if (std::find(names_.begin(), names_.end(), n) != names_.end()) {
      throw std::invalid_argument("merge_models: node name '" + n + "' appears in both models");
    }
    names_.push_back(n);
  }
  const std::size_t k1 = first_.k();
  std::vector<graph::WeightedEdge> edges = first_.dag().edges();
  const graph::Dag second_dag = second_.dag();
  for (auto e : second_dag.edges()) {
    e.parent += k1;
    e.child += k1;
    edges.push_back(e);
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& b : bridges_) {
    const auto& n1 = first_.concept_names();
    const auto& n2 = second_.concept_names();
    auto from = std::find(n1.begin(), n1.end(), b.from);
    auto to = std::find(n2.begin(), n2.end(), b.to);
    if (from == n1.end()) throw std::invalid_argument("bridge source '" + b.from + "' is not in the first model");
    if (to == n2.end()) throw std::invalid_argument("bridge target '" + b.to + "' is not in the second model");
    if (b.weight == 0.0) throw std::invalid_argument("bridge weight must be non-zero");
    const std::size_t p = static_cast<std::size_t>(from - n1.begin());
    const std::size_t c = k1 + static_cast<std::size_t>(to - n2.begin());
    if (!seen.insert({p, c}).second) throw std::invalid_argument("duplicate bridge " + b.from + "->" + b.to);
    edges.push_back({p, c, b.weight});
  }
  try {
    dag_ = graph::Dag(names_, std::move(edges));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("merge_models: composition is not acyclic: ") + e.what());
  }
}

ComposedModel merge_models(CgmModel first, CgmModel second, std::vector<BridgeEdge> bridges) {
  return ComposedModel(std::move(first), std::move(second), std::move(bridges));
}

std::vector<std::pair<std::size_t, double>> ComposedModel::bridges_into(std::size_t target,
                                                                        const graph::Dag& dag) const {
  std::vector<std::pair<std::size_t, double>> out;
  const std::size_t k1 = first_.k();
  for (const auto& e : dag.edges())
    if (e.child == target && e.parent < k1) out.push_back({e.parent, e.weight});
  return out;
}

Var ComposedModel::head_logit(Tape& tape, const Head& head, Var agg) const {
  auto bind = [&](std::size_t i) {
    if (tape.recording()) return tape.param(const_cast<diff::ParamBlock&>(head.blocks[i]));
    return tape.constant(head.blocks[i].value);
  };
  Var hidden = tape.relu(tape.add_row(tape.matmul(agg, bind(0)), bind(1)));
  return tape.add_row(tape.matmul(hidden, bind(2)), bind(3));
}

UnfoldResult ComposedModel::unfold(const Matrix& x, const InterventionSpec& spec) const {
  const std::size_t k1 = first_.k();
  const std::size_t k = this->k();
  const std::size_t b = x.rows();
  if (x.cols() != feature_dim()) {
    throw std::invalid_argument("composed unfold: expected feature dim " +
                                std::to_string(feature_dim()) + ", got " + std::to_string(x.cols()));
  }
  std::vector<std::optional<Matrix>> overrides(k);
  std::vector<Provenance> provenance(k, Provenance::kPredicted);
  std::set<std::size_t> severed;
  bool has_block = false;
  for (const auto& a : spec.actions()) {
    if (a.node >= k) throw std::invalid_argument("composed unfold: unknown node index");
    if (a.kind == ActionKind::kBlock) {
      has_block = true;
      continue;
    }
    overrides[a.node] = a.labels ? *a.labels : Matrix(b, 1, a.value);
    provenance[a.node] = a.kind == ActionKind::kDo ? Provenance::kDo : Provenance::kGroundTruth;
    severed.insert(a.node);
  }
  if (has_block) {
    const UnfoldResult factual = unfold(x);
    for (const auto& a : spec.actions()) {
      if (a.kind != ActionKind::kBlock) continue;
      for (std::size_t c : dag_.children(a.node)) {
        if (severed.contains(c)) continue;
        Matrix pin(b, 1);
        for (std::size_t r = 0; r < b; ++r) pin(r, 0) = factual.states(r, c);
        overrides[c] = std::move(pin);
        provenance[c] = Provenance::kBlocked;
        severed.insert(c);
      }
    }
  }

  UnfoldResult out;
  out.effective_graph = dag_.without_incoming(severed);
  const graph::Dag& eff = out.effective_graph;
  const Matrix weights = eff.weight_matrix();

  Tape tape(false);
  model::Exogenous exo1 = first_.encode(tape, tape.constant(columns(x, 0, first_.config().d)));
  model::Exogenous exo2 =
      second_.encode(tape, tape.constant(columns(x, first_.config().d, second_.config().d)));
  Var a1 = tape.constant(block(weights, 0, k1));
  Var a2 = tape.constant(block(weights, k1, k - k1));
  std::vector<Var> emb(k, tape.constant(Matrix(b, first_.embed_dim())));
  std::vector<Matrix> probs(k);
  auto pos = [&](std::size_t i) { return i < k1 ? exo1.pos[i] : exo2.pos[i - k1]; };
  auto neg = [&](std::size_t i) { return i < k1 ? exo1.neg[i] : exo2.neg[i - k1]; };

  for (std::size_t i : eff.topo_order()) {
    const CgmModel& owner = i < k1 ? first_ : second_;
    const std::size_t local = i < k1 ? i : i - k1;
    if (overrides[i]) {
      probs[i] = *overrides[i];
    } else if (eff.parents(i).empty()) {
      probs[i] = tape.sigmoid(owner.copy_logit(tape, pos(i), neg(i))).value();
    } else if (i < k1) {
      std::span<const Var> own(emb.data(), k1);
      probs[i] = tape.sigmoid(first_.endogenous_logit(tape, local, a1, own)).value();
    } else {
      std::span<const Var> own(emb.data() + k1, k - k1);
      const auto incoming = bridges_into(i, eff);
      Var logit;
      if (incoming.empty()) {
        logit = second_.endogenous_logit(tape, local, a2, own);
      } else {
        Var agg = tape.weighted_sum(a2, local, own);
        for (const auto& [p, w] : incoming) agg = tape.add(agg, tape.scale(emb[p], w));
        auto it = heads_.find(i);
        logit = it != heads_.end() ? head_logit(tape, it->second, agg)
                                   : second_.head_logit(tape, local, agg);
      }
      probs[i] = tape.sigmoid(logit).value();
    }
    emb[i] = tape.mix(tape.constant(probs[i]), pos(i), neg(i));
  }
  out.probs = Matrix(b, k);
  out.states = Matrix(b, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t r = 0; r < b; ++r) {
      out.probs(r, i) = probs[i](r, 0);
      out.states(r, i) = hard_state(probs[i](r, 0));
    }
    out.embeddings.push_back(emb[i].value());
  }
  out.provenance = std::move(provenance);
  return out;
}

double ComposedModel::fit_bridge_heads(const Matrix& x, const Matrix& labels, std::size_t epochs,
                                       double lr, std::uint64_t seed) {
  const std::size_t k1 = first_.k();
  const std::size_t k = this->k();
  if (labels.rows() != x.rows() || labels.cols() != k) {
    throw std::invalid_argument("fit_bridge_heads: labels must be B x k in composed order");
  }
  if (x.rows() == 0) throw std::invalid_argument("fit_bridge_heads: empty data");
  std::vector<std::size_t> targets;
  for (std::size_t i = k1; i < k; ++i)
    if (!bridges_into(i, dag_).empty()) targets.push_back(i);
  for (std::size_t t : targets) {
    const std::size_t local = t - k1;
    Head h{{second_.param("aggregator.W"), second_.param("aggregator.b"),
            second_.param("head." + std::to_string(local) + ".W"),
            second_.param("head." + std::to_string(local) + ".b")}};
    for (auto& blk : h.blocks) blk.zero_grad();
    heads_[t] = std::move(h);
  }
  if (targets.empty()) return 0.0;

  const Matrix a2 = block(dag_.weight_matrix(), k1, k - k1);
  std::seed_seq seq{seed, std::uint64_t{51}};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = first_.config().batch_size;
  double last = 0.0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      const Matrix xb = diff::take_rows(x, rows);
      const Matrix yb = diff::take_rows(labels, rows);
      std::vector<Matrix> pos_v;
      std::vector<Matrix> neg_v;
      {
        Tape frozen(false);
        model::Exogenous e1 =
            first_.encode(frozen, frozen.constant(columns(xb, 0, first_.config().d)));
        model::Exogenous e2 = second_.encode(
            frozen, frozen.constant(columns(xb, first_.config().d, second_.config().d)));
        for (std::size_t j = 0; j < k; ++j) {
          pos_v.push_back(j < k1 ? e1.pos[j].value() : e2.pos[j - k1].value());
          neg_v.push_back(j < k1 ? e1.neg[j].value() : e2.neg[j - k1].value());
        }
      }
      Tape tape;
      std::vector<Var> emb;
      for (std::size_t j = 0; j < k; ++j) {
        emb.push_back(tape.mix(tape.constant(columns(yb, j, 1)), tape.constant(pos_v[j]),
                               tape.constant(neg_v[j])));
      }
      Var a2v = tape.constant(a2);
      std::span<const Var> own(emb.data() + k1, k - k1);
      std::vector<diff::ParamBlock*> params;
      Var loss;
      bool have = false;
      for (std::size_t t : targets) {
        Var agg = tape.weighted_sum(a2v, t - k1, own);
        for (const auto& [p, w] : bridges_into(t, dag_)) agg = tape.add(agg, tape.scale(emb[p], w));
        Head& head = heads_.at(t);
        Var term = tape.bce_with_logits(head_logit(tape, head, agg), columns(yb, t, 1));
        loss = have ? tape.add(loss, term) : term;
        have = true;
        for (auto& blk : head.blocks) params.push_back(&blk);
      }
      tape.backward(loss);
      diff::sgd_step(params, lr);
      sum += loss.scalar();
      ++count;
    }
    last = sum / static_cast<double>(count);
  }
  return last;
}

}  // namespace ccgm::engine
