#include "ccgm/diffcore/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace ccgm::diff {

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

const Matrix& Var::value() const { return tape->value(*this); }

namespace {

void accumulate(Matrix* dst, const Matrix& src) {
  if (dst == nullptr) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

}  // namespace

void Tape::shape_error(const char* op, const std::string& detail) const {
  throw std::invalid_argument(std::string("shape mismatch at node ") +
                              std::to_string(nodes_.size()) + " (" + op + "): " + detail);
}

void Tape::check_same_shape(const char* op, Var a, Var b) const {
  if (!value(a).same_shape(value(b))) {
    shape_error(op, value(a).shape_string() + " vs " + value(b).shape_string());
  }
}

Var Tape::param(ParamBlock& p) {
  Node n;
  n.op = "param:" + p.name;
  n.value = p.value;
  n.param = record_ ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = "const";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string op, Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  if (record_) {
    bool needs = false;
    n.inputs.reserve(inputs.size());
    for (const Var& v : inputs) {
      if (v.tape != this) throw std::invalid_argument("Tape::record: input from another tape");
      n.inputs.push_back(v.id);
      const Node& in = nodes_[v.id];
      needs = needs || in.param != nullptr || static_cast<bool>(in.backward);
    }
    if (needs) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

const Matrix& Tape::value(Var v) const { return nodes_.at(v.id).value; }
const Matrix& Tape::grad(Var v) const { return nodes_.at(v.id).grad; }
const std::string& Tape::op_name(Var v) const { return nodes_.at(v.id).op; }

void Tape::backward(Var out) {
  if (!record_) throw std::logic_error("Tape::backward: tape was not recording");
  const Matrix& ov = value(out);
  if (ov.rows() != 1 || ov.cols() != 1) {
    throw std::invalid_argument("Tape::backward: output node " + std::to_string(out.id) + " (" +
                                op_name(out) + ") is " + ov.shape_string() + ", not scalar");
  }
  for (auto& n : nodes_) n.grad = Matrix();
  nodes_[out.id].grad = Matrix(1, 1, 1.0);

  std::vector<Matrix*> input_grads;
  for (std::size_t id = out.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.param != nullptr) {
      if (n.param->grad.empty()) n.param->zero_grad();
      accumulate(&n.param->grad, n.grad);
    }
    if (!n.backward) continue;
    input_grads.clear();
    for (std::size_t in : n.inputs) {
      Node& inn = nodes_[in];
      if (inn.param == nullptr && !inn.backward) {
        input_grads.push_back(nullptr);
        continue;
      }
      if (inn.grad.empty()) inn.grad = Matrix(inn.value.rows(), inn.value.cols());
      input_grads.push_back(&inn.grad);
    }
    n.backward(n.grad, input_grads);
  }
}

Var Tape::add(Var a, Var b) {
  check_same_shape("add", a, b);
  Matrix out = value(a);
  const Matrix& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return record("add", std::move(out), {a, b}, [](const Matrix& g, std::span<Matrix* const> gi) {
    accumulate(gi[0], g);
    accumulate(gi[1], g);
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape("sub", a, b);
  Matrix out = value(a);
  const Matrix& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return record("sub", std::move(out), {a, b}, [](const Matrix& g, std::span<Matrix* const> gi) {
    accumulate(gi[0], g);
    if (gi[1] != nullptr)
      for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
  });
}

Var Tape::mul(Var a, Var b) {
  check_same_shape("mul", a, b);
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return record("mul", std::move(out), {a, b},
                [this, ia = a.id, ib = b.id](const Matrix& g, std::span<Matrix* const> gi) {
                  const Matrix& av = nodes_[ia].value;
                  const Matrix& bv = nodes_[ib].value;
                  if (gi[0] != nullptr)
                    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * bv[i];
                  if (gi[1] != nullptr)
                    for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * av[i];
                });
}

Var Tape::add_row(Var a, Var row) {
  const Matrix& av = value(a);
  const Matrix& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    shape_error("add_row", av.shape_string() + " + row " + rv.shape_string());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv(0, j);
  return record("add_row", std::move(out), {a, row},
                [](const Matrix& g, std::span<Matrix* const> gi) {
                  accumulate(gi[0], g);
                  if (gi[1] != nullptr)
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      for (std::size_t j = 0; j < g.cols(); ++j) (*gi[1])(0, j) += g(i, j);
                });
}

Var Tape::mul_col(Var col, Var a) {
  const Matrix& cv = value(col);
  const Matrix& av = value(a);
  if (cv.cols() != 1 || cv.rows() != av.rows()) {
    shape_error("mul_col", "column " + cv.shape_string() + " * " + av.shape_string());
  }
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = cv(i, 0) * av(i, j);
  return record("mul_col", std::move(out), {col, a},
                [this, ic = col.id, ia = a.id](const Matrix& g, std::span<Matrix* const> gi) {
                  const Matrix& cv = nodes_[ic].value;
                  const Matrix& av = nodes_[ia].value;
                  for (std::size_t i = 0; i < g.rows(); ++i) {
                    for (std::size_t j = 0; j < g.cols(); ++j) {
                      if (gi[0] != nullptr) (*gi[0])(i, 0) += g(i, j) * av(i, j);
                      if (gi[1] != nullptr) (*gi[1])(i, j) += g(i, j) * cv(i, 0);
                    }
                  }
                });
}

Var Tape::scale(Var a, double s) {
  Matrix out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return record("scale", std::move(out), {a}, [s](const Matrix& g, std::span<Matrix* const> gi) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * s;
  });
}

Var Tape::add_scalar(Var a, double s) {
  Matrix out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  return record("add_scalar", std::move(out), {a},
                [](const Matrix& g, std::span<Matrix* const> gi) { accumulate(gi[0], g); });
}

Var Tape::scale_by(Var s, Var a) {
  const Matrix& sv = value(s);
  if (sv.rows() != 1 || sv.cols() != 1) shape_error("scale_by", "scale is " + sv.shape_string());
  const double k = sv(0, 0);
  const Matrix& av = value(a);
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * av[i];
  return record("scale_by", std::move(out), {s, a},
                [this, k, ia = a.id](const Matrix& g, std::span<Matrix* const> gi) {
                  const Matrix& av = nodes_[ia].value;
                  if (gi[0] != nullptr) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
                    (*gi[0])(0, 0) += acc;
                  }
                  if (gi[1] != nullptr)
                    for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * k;
                });
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.rows()) shape_error("matmul", av.shape_string() + " * " + bv.shape_string());
  Matrix out = diff::matmul(av, bv);
  return record("matmul", std::move(out), {a, b},
                [this, ia = a.id, ib = b.id](const Matrix& g, std::span<Matrix* const> gi) {
                  const Matrix& av = nodes_[ia].value;
                  const Matrix& bv = nodes_[ib].value;
                  if (gi[0] != nullptr) accumulate(gi[0], matmul_transposed_b(g, bv));
                  if (gi[1] != nullptr) accumulate(gi[1], matmul_transposed_a(av, g));
                });
}

Var Tape::sigmoid(Var a) {
  Matrix out = value(a);
  for (double& x : out.values()) x = diff::sigmoid(x);
  return record("sigmoid", std::move(out), {a},
                [this, self = nodes_.size()](const Matrix& g, std::span<Matrix* const> gi) {
                  const Matrix& y = nodes_[self].value;
                  for (std::size_t i = 0; i < g.size(); ++i)
                    (*gi[0])[i] += g[i] * y[i] * (1.0 - y[i]);
                });
}

Var Tape::relu(Var a) {
  const Matrix& av = value(a);
  Matrix out = av;
  for (double& x : out.values()) x = x > 0.0 ? x : 0.0;
  return record("relu", std::move(out), {a},
                [this, ia = a.id](const Matrix& g, std::span<Matrix* const> gi) {
    const Matrix& av = nodes_[ia].value;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) (*gi[0])[i] += g[i];
  });
}

Var Tape::leaky_relu(Var a, double slope) {
  const Matrix& av = value(a);
  Matrix out = av;
  for (double& x : out.values()) x = x > 0.0 ? x : slope * x;
  return record("leaky_relu", std::move(out), {a},
                [this, ia = a.id, slope](const Matrix& g, std::span<Matrix* const> gi) {
                  const Matrix& av = nodes_[ia].value;
                  for (std::size_t i = 0; i < g.size(); ++i)
                    (*gi[0])[i] += av[i] > 0.0 ? g[i] : slope * g[i];
                });
}

Var Tape::log(Var a) {
  const Matrix& av = value(a);
  Matrix out = av;
  for (double& x : out.values()) x = std::log(x);
  return record("log", std::move(out), {a},
                [this, ia = a.id](const Matrix& g, std::span<Matrix* const> gi) {
    const Matrix& av = nodes_[ia].value;
    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] / av[i];
  });
}

Var Tape::abs(Var a) {
  const Matrix& av = value(a);
  Matrix out = av;
  for (double& x : out.values()) x = std::fabs(x);
  return record("abs", std::move(out), {a},
                [this, ia = a.id](const Matrix& g, std::span<Matrix* const> gi) {
    const Matrix& av = nodes_[ia].value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0);
      (*gi[0])[i] += g[i] * s;
    }
  });
}

Var Tape::square(Var a) {
  const Matrix& av = value(a);
  Matrix out = av;
  for (double& x : out.values()) x = x * x;
  return record("square", std::move(out), {a},
                [this, ia = a.id](const Matrix& g, std::span<Matrix* const> gi) {
                  const Matrix& av = nodes_[ia].value;
                  for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += 2.0 * av[i] * g[i];
                });
}

Var Tape::sum(Var a) {
  const Matrix& av = value(a);
  double acc = 0.0;
  for (double x : av.values()) acc += x;
  return record("sum", Matrix(1, 1, acc), {a}, [](const Matrix& g, std::span<Matrix* const> gi) {
    for (double& x : gi[0]->values()) x += g(0, 0);
  });
}

Var Tape::mean(Var a) {
  const Matrix& av = value(a);
  if (av.empty()) shape_error("mean", "empty input");
  double acc = 0.0;
  for (double x : av.values()) acc += x;
  const double n = static_cast<double>(av.size());
  return record("mean", Matrix(1, 1, acc / n), {a},
                [n](const Matrix& g, std::span<Matrix* const> gi) {
                  for (double& x : gi[0]->values()) x += g(0, 0) / n;
                });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) shape_error("concat_cols", "no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (value(p).rows() != rows) {
      shape_error("concat_cols", value(p).shape_string() + " has " +
                                     std::to_string(value(p).rows()) + " rows, expected " +
                                     std::to_string(rows));
    }
    offsets.push_back(cols);
    cols += value(p).cols();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& pv = value(parts[k]);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, offsets[k] + j) = pv(i, j);
  }
  return record("concat_cols", std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                [offsets](const Matrix& g, std::span<Matrix* const> gi) {
                  for (std::size_t k = 0; k < gi.size(); ++k) {
                    if (gi[k] == nullptr) continue;
                    Matrix& dst = *gi[k];
                    for (std::size_t i = 0; i < dst.rows(); ++i)
                      for (std::size_t j = 0; j < dst.cols(); ++j) dst(i, j) += g(i, offsets[k] + j);
                  }
                });
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t count) {
  const Matrix& av = value(a);
  if (start + count > av.cols()) {
    shape_error("slice_cols", "columns [" + std::to_string(start) + ", " +
                                  std::to_string(start + count) + ") of " + av.shape_string());
  }
  Matrix out(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, start + j);
  return record("slice_cols", std::move(out), {a},
                [start](const Matrix& g, std::span<Matrix* const> gi) {
                  for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) (*gi[0])(i, start + j) += g(i, j);
                });
}

Var Tape::element(Var a, std::size_t r, std::size_t c) {
  const Matrix& av = value(a);
  if (r >= av.rows() || c >= av.cols()) {
    shape_error("element", "(" + std::to_string(r) + "," + std::to_string(c) + ") of " +
                               av.shape_string());
  }
  return record("element", Matrix(1, 1, av(r, c)), {a},
                [r, c](const Matrix& g, std::span<Matrix* const> gi) { (*gi[0])(r, c) += g(0, 0); });
}

Var Tape::trace_power(Var p, int power) {
  const Matrix& pv = value(p);
  if (pv.rows() != pv.cols()) shape_error("trace_power", "non-square " + pv.shape_string());
  if (power < 1) throw std::invalid_argument("trace_power: power must be >= 1");
  // powers[q] = P^q for q = 0..power-1
  std::vector<Matrix> powers;
  powers.push_back(Matrix::identity(pv.rows()));
  for (int q = 1; q < power; ++q) powers.push_back(diff::matmul(powers.back(), pv));
  const Matrix full = diff::matmul(powers.back(), pv);
  double tr = 0.0;
  for (std::size_t i = 0; i < full.rows(); ++i) tr += full(i, i);
  Matrix last = powers.back();
  return record("trace_power", Matrix(1, 1, tr), {p},
                [last, power](const Matrix& g, std::span<Matrix* const> gi) {
                  // d Tr(P^k) / dP = k (P^{k-1})^T
                  const double s = g(0, 0) * power;
                  for (std::size_t i = 0; i < last.rows(); ++i)
                    for (std::size_t j = 0; j < last.cols(); ++j) (*gi[0])(i, j) += s * last(j, i);
                });
}

Var Tape::bce_with_logits(Var logits, const Matrix& targets) {
  const Matrix& z = value(logits);
  if (!z.same_shape(targets)) {
    shape_error("bce_with_logits", z.shape_string() + " vs targets " + targets.shape_string());
  }
  if (z.empty()) shape_error("bce_with_logits", "empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) acc += softplus(z[i]) - targets[i] * z[i];
  const double n = static_cast<double>(z.size());
  return record("bce_with_logits", Matrix(1, 1, acc / n), {logits},
                [this, iz = logits.id, targets, n](const Matrix& g, std::span<Matrix* const> gi) {
                  const Matrix& z = nodes_[iz].value;
                  for (std::size_t i = 0; i < z.size(); ++i)
                    (*gi[0])[i] += g(0, 0) * (diff::sigmoid(z[i]) - targets[i]) / n;
                });
}

Var Tape::mix(Var v, Var pos, Var neg) {
  const Matrix& vv = value(v);
  const Matrix& pv = value(pos);
  const Matrix& nv = value(neg);
  if (!pv.same_shape(nv) || vv.cols() != 1 || vv.rows() != pv.rows()) {
    shape_error("mix", "weights " + vv.shape_string() + ", embeddings " + pv.shape_string() +
                           " / " + nv.shape_string());
  }
  Matrix out(pv.rows(), pv.cols());
  for (std::size_t i = 0; i < pv.rows(); ++i) {
    const double w = vv(i, 0);
    for (std::size_t j = 0; j < pv.cols(); ++j) out(i, j) = w * pv(i, j) + (1.0 - w) * nv(i, j);
  }
  return record("mix", std::move(out), {v, pos, neg},
                [this, iv = v.id, ip = pos.id, in = neg.id](const Matrix& g,
                                                            std::span<Matrix* const> gi) {
                  const Matrix& vv = nodes_[iv].value;
                  const Matrix& pv = nodes_[ip].value;
                  const Matrix& nv = nodes_[in].value;
                  for (std::size_t i = 0; i < g.rows(); ++i) {
                    const double w = vv(i, 0);
                    for (std::size_t j = 0; j < g.cols(); ++j) {
                      if (gi[0] != nullptr) (*gi[0])(i, 0) += g(i, j) * (pv(i, j) - nv(i, j));
                      if (gi[1] != nullptr) (*gi[1])(i, j) += g(i, j) * w;
                      if (gi[2] != nullptr) (*gi[2])(i, j) += g(i, j) * (1.0 - w);
                    }
                  }
                });
}

Var Tape::weighted_sum(Var weights, std::size_t row, std::span<const Var> parts) {
  const Matrix& wv = value(weights);
  if (row >= wv.rows() || wv.cols() != parts.size() || parts.empty()) {
    shape_error("weighted_sum", "weights " + wv.shape_string() + " row " + std::to_string(row) +
                                    " over " + std::to_string(parts.size()) + " parts");
  }
  const Matrix& first = value(parts[0]);
  for (const Var& p : parts) {
    if (!value(p).same_shape(first)) {
      shape_error("weighted_sum", value(p).shape_string() + " vs " + first.shape_string());
    }
  }
  Matrix out(first.rows(), first.cols());
  for (std::size_t j = 0; j < parts.size(); ++j) {
    if (j == row) continue;
    const double w = wv(row, j);
    const Matrix& pv = value(parts[j]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * pv[i];
  }
  std::vector<Var> inputs{weights};
  inputs.insert(inputs.end(), parts.begin(), parts.end());
  std::vector<std::size_t> part_ids;
  for (const Var& p : parts) part_ids.push_back(p.id);
  return record("weighted_sum", std::move(out), std::move(inputs),
                [this, iw = weights.id, row, part_ids](const Matrix& g,
                                                       std::span<Matrix* const> gi) {
                  const Matrix& wv = nodes_[iw].value;
                  for (std::size_t j = 0; j < part_ids.size(); ++j) {
                    if (j == row) continue;
                    if (gi[0] != nullptr) {
                      const Matrix& pv = nodes_[part_ids[j]].value;
                      double acc = 0.0;
                      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * pv[i];
                      (*gi[0])(row, j) += acc;
                    }
                    if (gi[j + 1] != nullptr) {
                      const double w = wv(row, j);
                      for (std::size_t i = 0; i < g.size(); ++i) (*gi[j + 1])[i] += g[i] * w;
                    }
                  }
                });
}

}  // namespace ccgm::diff
