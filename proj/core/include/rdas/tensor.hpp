#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "rdas/rng.hpp"

namespace rdas {

/// Dense row-major matrix of doubles. Vectors are 1 x n.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  std::string shape_string() const;
  bool same_shape(const Tensor& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  void fill(double v);
  /// this += other (same shape).
  void accumulate(const Tensor& other);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Sparse row-mixing operator: out[i] = sum_k weight_k * in[source_k].
/// Used for neighbour aggregation in graph convolution.
struct SparseRows {
  struct Entry {
    std::size_t source;
    double weight;
  };
  std::size_t input_rows = 0;
  std::vector<std::vector<Entry>> rows;
};

struct Parameter;
class ParamStore;
class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
};

/// Inputs handed to a backward rule.
struct GradContext {
  const Tensor& out_value;
  const Tensor& out_grad;
  std::span<const Tensor* const> in_values;
  /// Null entries are inputs that do not need a gradient.
  std::span<Tensor* const> in_grads;
};

using BackwardFn = std::function<void(const GradContext&)>;

/// Reverse-mode differentiation record. Nodes are appended in evaluation
/// order, so reverse insertion order is a valid topological order for the
/// backward sweep. A tape is single-threaded and single-use per pass.
class Tape {
 public:
  Tape() = default;
  /// Tape whose param() leaves resolve against `store`.
  explicit Tape(ParamStore& store) : store_(&store) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);
  Var param(std::string_view name);

  /// Record a custom op. `backward` receives the output gradient and must
  /// accumulate into every non-null input gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() w.r.t. `v`; zero-shaped if unreached.
  const Tensor& grad(Var v) const { return nodes_.at(v.index).grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Backpropagate from a 1x1 loss. Parameter gradients are accumulated into
  /// their Parameter::grad; trainable store parameters not reached by the
  /// loss receive an explicit zero gradient. The record is cleared afterwards
  /// unless `keep` is set (tests inspect intermediate gradients).
  void backward(Var loss, bool keep = false);

  void clear();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  static const Tensor& value_of(const Node& n);

  std::vector<Node> nodes_;
  std::vector<std::pair<const Parameter*, std::size_t>> param_nodes_;
  ParamStore* store_ = nullptr;
};

/// Differentiable ops. All take and return tape handles; inputs must share a
/// tape. Shape mismatches throw ShapeError naming the op and both shapes.
namespace ops {

Var matmul(Var a, Var b);
/// Elementwise sum. `b` may also be 1 x cols(a), broadcast over rows (bias).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// 1 - a, elementwise.
Var one_minus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
/// axis 1: each row sums to one; axis 0: each column sums to one.
Var softmax(Var a, int axis = 1);
/// axis 0 stacks rows, axis 1 stacks columns.
Var concat(Var a, Var b, int axis);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Repeat a 1 x c row `n` times.
Var repeat_rows(Var a, std::size_t n);
/// Gather rows of `table`.
Var embedding_lookup(Var table, std::span<const std::size_t> ids);
Var aggregate(Var x, const SparseRows& mix);
/// Inverted dropout; identity when !training or p == 0.
Var dropout(Var a, double p, bool training, Rng& rng);
/// Mean of all elements, 1 x 1.
Var mean(Var a);
/// Sum of all elements, 1 x 1.
Var sum(Var a);
/// Column vector of -log(probs[i, index[i]]).
Var neg_log_pick(Var probs, std::span<const std::size_t> index);

}  // namespace ops

}  // namespace rdas
