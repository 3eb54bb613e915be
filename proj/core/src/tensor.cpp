#include "rdas/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rdas/error.hpp"
#include "rdas/params.hpp"

namespace rdas {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

MatrixMap as_matrix(Tensor& t) {
  return {t.values().data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

ConstMatrixMap as_matrix(const Tensor& t) {
  return {t.values().data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

[[noreturn]] void shape_mismatch(std::string_view op, const Tensor& a, const Tensor& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << a.shape_string() << " and " << b.shape_string();
  throw ShapeError(os.str());
}

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::logic_error("ops: inputs recorded on different tapes");
  }
  return *a.tape;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeError("Tensor: " + std::to_string(values_.size()) + " values for shape [" +
                     std::to_string(rows) + "," + std::to_string(cols) + "]");
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Tensor::from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(values));
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(rows_) + "," + std::to_string(cols_) + "]";
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void Tensor::accumulate(const Tensor& other) {
  if (!same_shape(other)) shape_mismatch("accumulate", *this, other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
}

const Tensor& Var::value() const { return tape->value(*this); }

// ---------------------------------------------------------------------------
// Tape

const Tensor& Tape::value_of(const Node& n) { return n.param ? n.param->value : n.value; }

const Tensor& Tape::value(Var v) const { return value_of(nodes_.at(v.index)); }

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  for (const auto& [ptr, index] : param_nodes_) {
    if (ptr == &p) return {this, index};
  }
  Node node;
  node.param = &p;
  node.needs_grad = p.trainable;
  nodes_.push_back(std::move(node));
  param_nodes_.emplace_back(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::param(std::string_view name) {
  if (store_ == nullptr) throw std::logic_error("Tape::param: tape has no parameter store");
  return param(store_->get(name));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tape != this) throw std::logic_error("Tape::record: input from another tape");
    node.inputs.push_back(in.index);
    node.needs_grad = node.needs_grad || nodes_[in.index].needs_grad;
  }
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var loss, bool keep) {
  if (loss.tape != this) throw std::logic_error("Tape::backward: loss from another tape");
  Node& root = nodes_.at(loss.index);
  if (value_of(root).rows() != 1 || value_of(root).cols() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + value_of(root).shape_string());
  }
  root.grad = Tensor(1, 1, 1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.needs_grad || node.grad.size() == 0 || !node.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : node.inputs) {
      Node& src = nodes_[in];
      const Tensor& src_value = value_of(src);
      in_values.push_back(&src_value);
      if (src.needs_grad) {
        if (src.grad.size() == 0 && src_value.size() != 0) {
          src.grad = Tensor(src_value.rows(), src_value.cols());
        }
        in_grads.push_back(&src.grad);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    node.backward(GradContext{value_of(node), node.grad, in_values, in_grads});
  }

  for (const auto& [param, index] : param_nodes_) {
    Node& node = nodes_[index];
    auto* p = node.param;
    if (!p->trainable) continue;
    if (!p->grad) p->grad = Tensor(p->value.rows(), p->value.cols());
    if (node.grad.size() != 0) p->grad->accumulate(node.grad);
  }
  if (store_ != nullptr) {
    for (auto& p : store_->parameters()) {
      if (p.trainable && !p.grad) p.grad = Tensor(p.value.rows(), p.value.cols());
    }
  }
  if (!keep) clear();
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

// ---------------------------------------------------------------------------
// ops

namespace ops {

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  if (x.cols() != y.rows()) shape_mismatch("matmul", x, y);
  Tensor out(x.rows(), y.cols());
  as_matrix(out).noalias() = as_matrix(x) * as_matrix(y);
  return tape.record(std::move(out), {a, b}, [](const GradContext& g) {
    const auto dout = as_matrix(g.out_grad);
    if (g.in_grads[0]) as_matrix(*g.in_grads[0]).noalias() += dout * as_matrix(*g.in_values[1]).transpose();
    if (g.in_grads[1]) as_matrix(*g.in_grads[1]).noalias() += as_matrix(*g.in_values[0]).transpose() * dout;
  });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  const bool broadcast = !x.same_shape(y);
  if (broadcast && !(y.rows() == 1 && y.cols() == x.cols())) shape_mismatch("add", x, y);
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto dst = out.row(r);
    auto src = broadcast ? y.row(0) : y.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) dst[c] += src[c];
  }
  return tape.record(std::move(out), {a, b}, [broadcast](const GradContext& g) {
    if (g.in_grads[0]) g.in_grads[0]->accumulate(g.out_grad);
    if (g.in_grads[1]) {
      if (!broadcast) {
        g.in_grads[1]->accumulate(g.out_grad);
      } else {
        auto dst = g.in_grads[1]->row(0);
        for (std::size_t r = 0; r < g.out_grad.rows(); ++r) {
          auto src = g.out_grad.row(r);
          for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
      }
    }
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  if (!x.same_shape(y)) shape_mismatch("sub", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return tape.record(std::move(out), {a, b}, [](const GradContext& g) {
    if (g.in_grads[0]) g.in_grads[0]->accumulate(g.out_grad);
    if (g.in_grads[1]) {
      Tensor& dy = *g.in_grads[1];
      for (std::size_t i = 0; i < dy.size(); ++i) dy[i] -= g.out_grad[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  if (!x.same_shape(y)) shape_mismatch("mul", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return tape.record(std::move(out), {a, b}, [](const GradContext& g) {
    const Tensor& x = *g.in_values[0];
    const Tensor& y = *g.in_values[1];
    if (g.in_grads[0]) {
      Tensor& dx = *g.in_grads[0];
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g.out_grad[i] * y[i];
    }
    if (g.in_grads[1]) {
      Tensor& dy = *g.in_grads[1];
      for (std::size_t i = 0; i < dy.size(); ++i) dy[i] += g.out_grad[i] * x[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tape& tape = *a.tape;
  Tensor out = tape.value(a);
  for (auto& v : out.values()) v *= factor;
  return tape.record(std::move(out), {a}, [factor](const GradContext& g) {
    if (!g.in_grads[0]) return;
    Tensor& dx = *g.in_grads[0];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * g.out_grad[i];
  });
}

Var one_minus(Var a) {
  Tape& tape = *a.tape;
  Tensor out = tape.value(a);
  for (auto& v : out.values()) v = 1.0 - v;
  return tape.record(std::move(out), {a}, [](const GradContext& g) {
    if (!g.in_grads[0]) return;
    Tensor& dx = *g.in_grads[0];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] -= g.out_grad[i];
  });
}

Var sigmoid(Var a) {
  Tape& tape = *a.tape;
  Tensor out = tape.value(a);
  for (auto& v : out.values()) v = stable_sigmoid(v);
  return tape.record(std::move(out), {a}, [](const GradContext& g) {
    if (!g.in_grads[0]) return;
    Tensor& dx = *g.in_grads[0];
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double s = g.out_value[i];
      dx[i] += g.out_grad[i] * s * (1.0 - s);
    }
  });
}

Var tanh(Var a) {
  Tape& tape = *a.tape;
  Tensor out = tape.value(a);
  for (auto& v : out.values()) v = std::tanh(v);
  return tape.record(std::move(out), {a}, [](const GradContext& g) {
    if (!g.in_grads[0]) return;
    Tensor& dx = *g.in_grads[0];
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double t = g.out_value[i];
      dx[i] += g.out_grad[i] * (1.0 - t * t);
    }
  });
}

Var softmax(Var a, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  Tape& tape = *a.tape;
  const Tensor& x = tape.value(a);
  Tensor out(x.rows(), x.cols());
  // Walk each softmax group through (outer, inner) strides.
  const std::size_t groups = axis == 1 ? x.rows() : x.cols();
  const std::size_t length = axis == 1 ? x.cols() : x.rows();
  const std::size_t group_stride = axis == 1 ? x.cols() : 1;
  const std::size_t elem_stride = axis == 1 ? 1 : x.cols();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t base = gi * group_stride;
    double peak = -INFINITY;
    for (std::size_t k = 0; k < length; ++k) peak = std::max(peak, x[base + k * elem_stride]);
    double total = 0.0;
    for (std::size_t k = 0; k < length; ++k) {
      const double e = std::exp(x[base + k * elem_stride] - peak);
      out[base + k * elem_stride] = e;
      total += e;
    }
    for (std::size_t k = 0; k < length; ++k) out[base + k * elem_stride] /= total;
  }
  return tape.record(std::move(out), {a},
                     [groups, length, group_stride, elem_stride](const GradContext& g) {
                       if (!g.in_grads[0]) return;
                       Tensor& dx = *g.in_grads[0];
                       for (std::size_t gi = 0; gi < groups; ++gi) {
                         const std::size_t base = gi * group_stride;
                         double dot = 0.0;
                         for (std::size_t k = 0; k < length; ++k) {
                           const std::size_t i = base + k * elem_stride;
                           dot += g.out_grad[i] * g.out_value[i];
                         }
                         for (std::size_t k = 0; k < length; ++k) {
                           const std::size_t i = base + k * elem_stride;
                           dx[i] += g.out_value[i] * (g.out_grad[i] - dot);
                         }
                       }
                     });
}

Var concat(Var a, Var b, int axis) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  if (axis == 0) {
    if (x.cols() != y.cols()) shape_mismatch("concat(axis=0)", x, y);
    std::vector<double> values(x.values().begin(), x.values().end());
    values.insert(values.end(), y.values().begin(), y.values().end());
    const std::size_t split = x.size();
    return tape.record(Tensor(x.rows() + y.rows(), x.cols(), std::move(values)), {a, b},
                       [split](const GradContext& g) {
                         if (g.in_grads[0]) {
                           Tensor& dx = *g.in_grads[0];
                           for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g.out_grad[i];
                         }
                         if (g.in_grads[1]) {
                           Tensor& dy = *g.in_grads[1];
                           for (std::size_t i = 0; i < dy.size(); ++i) dy[i] += g.out_grad[split + i];
                         }
                       });
  }
  if (axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  if (x.rows() != y.rows()) shape_mismatch("concat(axis=1)", x, y);
  Tensor out(x.rows(), x.cols() + y.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy(x.row(r).begin(), x.row(r).end(), out.row(r).begin());
    std::copy(y.row(r).begin(), y.row(r).end(), out.row(r).begin() + x.cols());
  }
  const std::size_t left = x.cols();
  return tape.record(std::move(out), {a, b}, [left](const GradContext& g) {
    for (std::size_t r = 0; r < g.out_grad.rows(); ++r) {
      auto src = g.out_grad.row(r);
      if (g.in_grads[0]) {
        auto dst = g.in_grads[0]->row(r);
        for (std::size_t c = 0; c < left; ++c) dst[c] += src[c];
      }
      if (g.in_grads[1]) {
        auto dst = g.in_grads[1]->row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[left + c];
      }
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& tape = *a.tape;
  const Tensor& x = tape.value(a);
  if (start + count > x.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") out of range for " + x.shape_string());
  }
  Tensor out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy_n(x.row(r).begin() + start, count, out.row(r).begin());
  }
  return tape.record(std::move(out), {a}, [start, count](const GradContext& g) {
    if (!g.in_grads[0]) return;
    for (std::size_t r = 0; r < g.out_grad.rows(); ++r) {
      auto dst = g.in_grads[0]->row(r);
      auto src = g.out_grad.row(r);
      for (std::size_t c = 0; c < count; ++c) dst[start + c] += src[c];
    }
  });
}

Var repeat_rows(Var a, std::size_t n) {
  Tape& tape = *a.tape;
  const Tensor& x = tape.value(a);
  if (x.rows() != 1) throw ShapeError("repeat_rows: expected a single row, got " + x.shape_string());
  Tensor out(n, x.cols());
  for (std::size_t r = 0; r < n; ++r) std::copy(x.row(0).begin(), x.row(0).end(), out.row(r).begin());
  return tape.record(std::move(out), {a}, [](const GradContext& g) {
    if (!g.in_grads[0]) return;
    auto dst = g.in_grads[0]->row(0);
    for (std::size_t r = 0; r < g.out_grad.rows(); ++r) {
      auto src = g.out_grad.row(r);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

Var embedding_lookup(Var table, std::span<const std::size_t> ids) {
  Tape& tape = *table.tape;
  const Tensor& t = tape.value(table);
  Tensor out(ids.size(), t.cols());
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.rows()) {
      throw ShapeError("embedding_lookup: id " + std::to_string(rows[i]) + " out of range for " +
                       t.shape_string());
    }
    std::copy(t.row(rows[i]).begin(), t.row(rows[i]).end(), out.row(i).begin());
  }
  return tape.record(std::move(out), {table}, [rows = std::move(rows)](const GradContext& g) {
    if (!g.in_grads[0]) return;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto dst = g.in_grads[0]->row(rows[i]);
      auto src = g.out_grad.row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

Var aggregate(Var x, const SparseRows& mix) {
  Tape& tape = *x.tape;
  const Tensor& in = tape.value(x);
  if (mix.input_rows != in.rows()) {
    throw ShapeError("aggregate: operator expects " + std::to_string(mix.input_rows) +
                     " input rows, got " + in.shape_string());
  }
  Tensor out(mix.rows.size(), in.cols());
  for (std::size_t r = 0; r < mix.rows.size(); ++r) {
    auto dst = out.row(r);
    for (const auto& e : mix.rows[r]) {
      auto src = in.row(e.source);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += e.weight * src[c];
    }
  }
  return tape.record(std::move(out), {x}, [mix](const GradContext& g) {
    if (!g.in_grads[0]) return;
    for (std::size_t r = 0; r < mix.rows.size(); ++r) {
      auto src = g.out_grad.row(r);
      for (const auto& e : mix.rows[r]) {
        auto dst = g.in_grads[0]->row(e.source);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += e.weight * src[c];
      }
    }
  });
}

Var dropout(Var a, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return a;
  Tape& tape = *a.tape;
  const Tensor& x = tape.value(a);
  Tensor mask(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& m : mask.values()) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return tape.record(std::move(out), {a}, [mask = std::move(mask)](const GradContext& g) {
    if (!g.in_grads[0]) return;
    Tensor& dx = *g.in_grads[0];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g.out_grad[i] * mask[i];
  });
}

Var mean(Var a) {
  Tape& tape = *a.tape;
  const Tensor& x = tape.value(a);
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  return tape.record(Tensor::scalar(total * inv), {a}, [inv](const GradContext& g) {
    if (!g.in_grads[0]) return;
    const double d = g.out_grad[0] * inv;
    for (auto& v : g.in_grads[0]->values()) v += d;
  });
}

Var sum(Var a) {
  Tape& tape = *a.tape;
  double total = 0.0;
  for (double v : tape.value(a).values()) total += v;
  return tape.record(Tensor::scalar(total), {a}, [](const GradContext& g) {
    if (!g.in_grads[0]) return;
    for (auto& v : g.in_grads[0]->values()) v += g.out_grad[0];
  });
}

Var neg_log_pick(Var probs, std::span<const std::size_t> index) {
  Tape& tape = *probs.tape;
  const Tensor& p = tape.value(probs);
  if (index.size() != p.rows()) {
    throw ShapeError("neg_log_pick: " + std::to_string(index.size()) + " labels for " +
                     p.shape_string() + " probabilities");
  }
  std::vector<std::size_t> picks(index.begin(), index.end());
  Tensor out(p.rows(), 1);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    if (picks[r] >= p.cols()) throw ShapeError("neg_log_pick: label out of range");
    out[r] = -std::log(p(r, picks[r]));
  }
  return tape.record(std::move(out), {probs}, [picks = std::move(picks)](const GradContext& g) {
    if (!g.in_grads[0]) return;
    const Tensor& p = *g.in_values[0];
    for (std::size_t r = 0; r < picks.size(); ++r) {
      (*g.in_grads[0])(r, picks[r]) -= g.out_grad[r] / p(r, picks[r]);
    }
  });
}

}  // namespace ops

}  // namespace rdas
