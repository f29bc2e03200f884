// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lpvid/errors.hpp"

namespace lpvid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Operation tags of the computation graph. Values are matrices; column
/// vectors and 1x1 scalars are the degenerate cases.
enum class OpKind {
  leaf,
  add,
  sub,
  scale,   // constant scalar times a node
  mul,     // elementwise product of two equal-shape nodes
  matvec,  // matrix node times column-vector node
  matmul,
  tanh,
  square,  // elementwise square
  sum,     // sum of all entries -> 1x1
  concat,  // vertical concatenation, equal column counts
};

struct CompNode {
  Matrix value;
  Matrix grad;  // allocated by backward(); same shape as value
  OpKind op = OpKind::leaf;
  std::vector<int> inputs;
  double attr = 0.0;  // scale factor for OpKind::scale
  bool requires_grad = false;
};

/// Append-only computation tape. Node indices are handed out in creation
/// order, which is also a valid topological order: every node's inputs
/// precede it. backward() walks that order in reverse with a fixed
/// accumulation order, so gradients are bit-reproducible.
class Tape {
 public:
  int leaf(Matrix v, bool requires_grad = true) {
    CompNode n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  /// Leaf that never receives a gradient (data windows, broadcast helpers).
  int constant(Matrix v) { return leaf(std::move(v), false); }

  int add(int a, int b) {
    require_same_shape("add", a, b);
    return record(OpKind::add, {a, b}, value(a) + value(b));
  }

  int sub(int a, int b) {
    require_same_shape("sub", a, b);
    return record(OpKind::sub, {a, b}, value(a) - value(b));
  }

  int scale(int a, double c) {
    int id = record(OpKind::scale, {a}, c * value(a));
    nodes_[id].attr = c;
    return id;
  }

  int mul(int a, int b) {
    require_same_shape("mul", a, b);
    return record(OpKind::mul, {a, b}, value(a).cwiseProduct(value(b)));
  }

  int matvec(int m, int v) {
    const Matrix& mv = value(m);
    const Matrix& vv = value(v);
    if (vv.cols() != 1 || mv.cols() != vv.rows())
      throw DimensionError("matvec: " + shape_str(m) + " * " + shape_str(v));
    return record(OpKind::matvec, {m, v}, mv * vv);
  }

  int matmul(int a, int b) {
    if (value(a).cols() != value(b).rows())
      throw DimensionError("matmul: " + shape_str(a) + " * " + shape_str(b));
    return record(OpKind::matmul, {a, b}, value(a) * value(b));
  }

  int tanh(int a) {
    return record(OpKind::tanh, {a}, value(a).array().tanh().matrix());
  }

  int square(int a) {
    return record(OpKind::square, {a}, value(a).cwiseProduct(value(a)));
  }

  int sum(int a) {
    Matrix s(1, 1);
    s(0, 0) = value(a).sum();
    return record(OpKind::sum, {a}, std::move(s));
  }

  int concat(std::span<const int> parts) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts[0]).cols();
    for (int p : parts) {
      if (value(p).cols() != cols)
        throw DimensionError("concat: column mismatch at " + shape_str(p));
      rows += value(p).rows();
    }
    Matrix out(rows, cols);
    Eigen::Index r = 0;
    for (int p : parts) {
      out.middleRows(r, value(p).rows()) = value(p);
      r += value(p).rows();
    }
    return record(OpKind::concat, {parts.begin(), parts.end()}, std::move(out));
  }

  int concat(std::initializer_list<int> parts) {
    return concat(std::span<const int>(parts.begin(), parts.size()));
  }

  /// Generic dispatch over the op set; `attr` is only read by `scale`.
  int apply(OpKind op, std::span<const int> inputs, double attr = 0.0) {
    auto arity = [&](size_t k) {
      if (inputs.size() != k)
        throw DimensionError("graph op: wrong input count");
    };
    switch (op) {
      case OpKind::add: arity(2); return add(inputs[0], inputs[1]);
      case OpKind::sub: arity(2); return sub(inputs[0], inputs[1]);
      case OpKind::scale: arity(1); return scale(inputs[0], attr);
      case OpKind::mul: arity(2); return mul(inputs[0], inputs[1]);
      case OpKind::matvec: arity(2); return matvec(inputs[0], inputs[1]);
      case OpKind::matmul: arity(2); return matmul(inputs[0], inputs[1]);
      case OpKind::tanh: arity(1); return tanh(inputs[0]);
      case OpKind::square: arity(1); return square(inputs[0]);
      case OpKind::sum: arity(1); return sum(inputs[0]);
      case OpKind::concat: return concat(inputs);
      case OpKind::leaf: break;
    }
    throw DimensionError("graph op: not an applicable op kind");
  }

  const Matrix& value(int id) const { return nodes_.at(id).value; }
  const Matrix& grad(int id) const { return nodes_.at(id).grad; }
  const CompNode& node(int id) const { return nodes_.at(id); }
  size_t size() const { return nodes_.size(); }

  /// Reverse pass from a scalar (1x1) root. After the call every leaf with
  /// requires_grad holds d(root)/d(leaf) in its grad member (zeros when it
  /// does not influence the root). Gradients are allocated lazily and
  /// accumulated in a fixed order, so results are bit-reproducible.
  void backward(int root) {
    const CompNode& r = nodes_.at(root);
    if (r.value.rows() != 1 || r.value.cols() != 1)
      throw DimensionError("backward: root must be scalar, got " +
                           shape_str(root));
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (r.requires_grad) {
      nodes_[root].grad = Matrix::Ones(1, 1);

      for (int i = root; i >= 0; --i) {
        CompNode& n = nodes_[i];
        if (!n.requires_grad || n.op == OpKind::leaf || n.grad.size() == 0)
          continue;
        const Matrix& g = n.grad;
        switch (n.op) {
          case OpKind::add:
            acc(n.inputs[0], g);
            acc(n.inputs[1], g);
            break;
          case OpKind::sub:
            acc(n.inputs[0], g);
            acc(n.inputs[1], -g);
            break;
          case OpKind::scale:
            acc(n.inputs[0], n.attr * g);
            break;
          case OpKind::mul:
            acc(n.inputs[0], g.cwiseProduct(nodes_[n.inputs[1]].value));
            acc(n.inputs[1], g.cwiseProduct(nodes_[n.inputs[0]].value));
            break;
          case OpKind::matvec:
          case OpKind::matmul: {
            CompNode& a = nodes_[n.inputs[0]];
            CompNode& b = nodes_[n.inputs[1]];
            if (a.requires_grad) {
              if (a.grad.size() == 0) {
                a.grad.resize(a.value.rows(), a.value.cols());
                a.grad.noalias() = g * b.value.transpose();
              } else {
                a.grad.noalias() += g * b.value.transpose();
              }
            }
            if (b.requires_grad) {
              if (b.grad.size() == 0) {
                b.grad.resize(b.value.rows(), b.value.cols());
                b.grad.noalias() = a.value.transpose() * g;
              } else {
                b.grad.noalias() += a.value.transpose() * g;
              }
            }
            break;
          }
          case OpKind::tanh:
            acc_expr(n.inputs[0],
                     g.array() * (1.0 - n.value.array().square()));
            break;
          case OpKind::square:
            acc_expr(n.inputs[0],
                     2.0 * g.array() * nodes_[n.inputs[0]].value.array());
            break;
          case OpKind::sum:
            acc_uniform(n.inputs[0], g(0, 0));
            break;
          case OpKind::concat: {
            Eigen::Index row = 0;
            for (int p : n.inputs) {
              const Eigen::Index pr = nodes_[p].value.rows();
              acc(p, g.middleRows(row, pr));
              row += pr;
            }
            break;
          }
          case OpKind::leaf:
            break;
        }
      }
    }
    // Leaves that never received a contribution hold exact zeros.
    for (auto& n : nodes_)
      if (n.requires_grad && n.op == OpKind::leaf && n.grad.size() == 0)
        n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }

  void reserve(size_t n) { nodes_.reserve(n); }

  void clear() { nodes_.clear(); }

 private:
  int record(OpKind op, std::vector<int> inputs, Matrix v) {
    CompNode n;
    n.op = op;
    n.value = std::move(v);
    for (int i : inputs)
      if (nodes_.at(i).requires_grad) n.requires_grad = true;
    n.inputs = std::move(inputs);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  template <typename Expr>
  void acc(int id, const Expr& g) {
    CompNode& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad.noalias() += g;
  }
  template <typename ArrayExpr>
  void acc_expr(int id, const ArrayExpr& g) {
    CompNode& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g.matrix();
    else
      n.grad.array() += g;
  }
  void acc_uniform(int id, double v) {
    CompNode& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = Matrix::Constant(n.value.rows(), n.value.cols(), v);
    else
      n.grad.array() += v;
  }

  void require_same_shape(const char* op, int a, int b) const {
    if (value(a).rows() != value(b).rows() ||
        value(a).cols() != value(b).cols())
      throw DimensionError(std::string(op) + ": " + shape_str(a) + " vs " +
                           shape_str(b));
  }

  std::string shape_str(int id) const {
    return std::to_string(value(id).rows()) + "x" +
           std::to_string(value(id).cols());
  }

  std::vector<CompNode> nodes_;
};

}  // namespace lpvid
