#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ccgm/diffcore/matrix.hpp"

namespace ccgm::diff {

// A named block of trainable parameters. `value` and `grad` always share a shape.
struct ParamBlock {
  std::string name;
  Matrix value;
  Matrix grad;

  ParamBlock() = default;
  ParamBlock(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix(value.rows(), value.cols());
  }
  std::vector<std::size_t> shape() const { return {value.rows(), value.cols()}; }
  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

// Reverse-mode tape over matrix-valued nodes. Nodes are appended in
// evaluation order, so the node list is already a topological order.
//
// With recording disabled the tape only evaluates forward values; the same
// op functions are used for training and inference.
class Tape {
 public:
  // Receives the gradient of the node's output and must accumulate into the
  // gradients of its inputs (same order as the `inputs` passed to record()).
  using BackwardFn =
      std::function<void(const Matrix& out_grad, std::span<Matrix* const> input_grads)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var param(ParamBlock& p);
  Var constant(Matrix value);
  Var constant_scalar(double value) { return constant(Matrix(1, 1, value)); }

  // Appends a node. Used by the built-in ops below and by module-specific ops.
  Var record(std::string op, Matrix value, std::vector<Var> inputs, BackwardFn backward);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;
  const std::string& op_name(Var v) const;

  // Seeds d(out)/d(out) = 1 and propagates; accumulates into bound ParamBlocks.
  // Throws if `out` is not 1x1 or the tape was not recording.
  void backward(Var out);

  // Elementwise / structural ops.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_row(Var a, Var row);  // broadcast a 1xC row over every row of a
  Var mul_col(Var col, Var a);  // broadcast a Bx1 column over every column of a
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var scale_by(Var s, Var a);  // 1x1 node times matrix
  Var matmul(Var a, Var b);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var leaky_relu(Var a, double slope);
  Var log(Var a);
  Var abs(Var a);
  Var square(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var a, std::size_t start, std::size_t count);
  Var element(Var a, std::size_t r, std::size_t c);
  // Tr(P^power) for square P.
  Var trace_power(Var p, int power);
  // mean over all entries of softplus(z) - y*z, i.e. binary cross-entropy on logits.
  Var bce_with_logits(Var logits, const Matrix& targets);
  // v*pos + (1-v)*neg with v a Bx1 column in [0,1]; exact endpoints at 0 and 1.
  Var mix(Var v, Var pos, Var neg);
  // sum_{j != row} weights(row, j) * parts[j], in increasing j.
  Var weighted_sum(Var weights, std::size_t row, std::span<const Var> parts);

 private:
  struct Node {
    std::string op;
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    ParamBlock* param = nullptr;
  };

  void check_same_shape(const char* op, Var a, Var b) const;
  [[noreturn]] void shape_error(const char* op, const std::string& detail) const;

  bool record_;
  std::vector<Node> nodes_;
};

double sigmoid(double x);
double softplus(double x);

}  // namespace ccgm::diff
