#pragma once

#include "goat/batch_norm.hpp"
#include "goat/tensor.hpp"

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace goat {

// Handle to a node on a tape. Only meaningful for the tape that created it.
struct Var {
  std::size_t id = 0;
};

enum class OpKind {
  leaf,
  matmul,        // A B
  matmul_nt,     // A B^T
  add,
  sub,
  hadamard,
  scale,         // s A
  add_row,       // A + 1 b, b is 1 x cols
  mul_row,       // A diag(b), b is 1 x cols
  softmax_rows,  // optional mask; masked entries are exactly 0
  relu,
  sigmoid,
  batch_norm,    // parents: x, gamma, beta
  mean_rows,     // 1 x cols
  sum,           // 1 x 1
  slice_cols,
  slice_rows,
  concat_cols,
  concat_rows,
  bce_sum,       // parents: probabilities, constant targets; 1 x 1
};

// Reverse-mode tape over a fixed op vocabulary. Nodes are appended in
// topological order, so backward() is a single reverse sweep. Gradients of a
// node used by several consumers are summed.
template <typename Scalar>
class BasicTape {
 public:
  using Mat = MatrixX<Scalar>;
  using Row = RowVectorX<Scalar>;

  Var constant(Mat value) { return push(OpKind::leaf, std::move(value), {}, false); }
  Var parameter(Mat value) { return push(OpKind::leaf, std::move(value), {}, true); }

  const Mat& value(Var v) const { return nodes_.at(v.id).value; }
  const Mat& grad(Var v) const { return nodes_.at(v.id).grad; }
  OpKind op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b) {
    check_shape(value(a).cols() == value(b).rows(), "matmul");
    return push(OpKind::matmul, value(a) * value(b), {a, b});
  }
  Var matmul_nt(Var a, Var b) {
    check_shape(value(a).cols() == value(b).cols(), "matmul_nt");
    return push(OpKind::matmul_nt, value(a) * value(b).transpose(), {a, b});
  }
  Var add(Var a, Var b) {
    check_same(a, b, "add");
    return push(OpKind::add, value(a) + value(b), {a, b});
  }
  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    return push(OpKind::sub, value(a) - value(b), {a, b});
  }
  Var hadamard(Var a, Var b) {
    check_same(a, b, "hadamard");
    return push(OpKind::hadamard, value(a).cwiseProduct(value(b)), {a, b});
  }
  Var scale(Var a, Scalar s) {
    Var out = push(OpKind::scale, s * value(a), {a});
    nodes_[out.id].scalar = s;
    return out;
  }
  Var add_row(Var a, Var row) {
    check_shape(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_row");
    Mat out = value(a).rowwise() + value(row).row(0);
    return push(OpKind::add_row, std::move(out), {a, row});
  }
  Var mul_row(Var a, Var row) {
    check_shape(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "mul_row");
    Mat out = value(a).array().rowwise() * value(row).row(0).array();
    return push(OpKind::mul_row, std::move(out), {a, row});
  }
  Var softmax_rows(Var a) { return push(OpKind::softmax_rows, goat::softmax_rows(value(a)), {a}); }
  Var softmax_rows(Var a, const BoolMatrix& keep) {
    check_shape(keep.rows() == value(a).rows() && keep.cols() == value(a).cols(), "softmax_rows");
    return push(OpKind::softmax_rows, goat::softmax_rows_masked(value(a), keep), {a});
  }
  Var relu(Var a) { return push(OpKind::relu, goat::relu(value(a)), {a}); }
  Var sigmoid(Var a) { return push(OpKind::sigmoid, goat::sigmoid(value(a)), {a}); }
  Var mean_rows(Var a) { return push(OpKind::mean_rows, Mat(value(a).colwise().mean()), {a}); }
  Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return push(OpKind::sum, std::move(out), {a});
  }
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    check_shape(start >= 0 && count >= 0 && start + count <= value(a).cols(), "slice_cols");
    Var out = push(OpKind::slice_cols, Mat(value(a).middleCols(start, count)), {a});
    nodes_[out.id].offset = start;
    return out;
  }
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    check_shape(start >= 0 && count >= 0 && start + count <= value(a).rows(), "slice_rows");
    Var out = push(OpKind::slice_rows, Mat(value(a).middleRows(start, count)), {a});
    nodes_[out.id].offset = start;
    return out;
  }
  Var concat_cols(const std::vector<Var>& parts) {
    check_shape(!parts.empty(), "concat_cols");
    Eigen::Index rows = value(parts[0]).rows(), cols = 0;
    for (Var p : parts) {
      check_shape(value(p).rows() == rows, "concat_cols");
      cols += value(p).cols();
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
    }
    return push(OpKind::concat_cols, std::move(out), parts);
  }
  Var concat_rows(const std::vector<Var>& parts) {
    check_shape(!parts.empty(), "concat_rows");
    Eigen::Index cols = value(parts[0]).cols(), rows = 0;
    for (Var p : parts) {
      check_shape(value(p).cols() == cols, "concat_rows");
      rows += value(p).rows();
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
    }
    return push(OpKind::concat_rows, std::move(out), parts);
  }

  // Batch norm with learnable gamma/beta nodes (1 x cols). Train mode uses
  // batch statistics and advances the running statistics in `state`; eval
  // mode uses the running statistics. state.gamma/beta are ignored here.
  Var batch_norm(Var x, Var gamma, Var beta, BatchNormState<Scalar>& state, Mode mode) {
    const Mat& xv = value(x);
    check_shape(value(gamma).rows() == 1 && value(gamma).cols() == xv.cols(), "batch_norm");
    check_shape(value(beta).rows() == 1 && value(beta).cols() == xv.cols(), "batch_norm");
    auto fwd = batch_norm_normalize(xv, state, mode);
    if (mode == Mode::train) batch_norm_update_running(state, fwd, xv.rows());
    Mat out = fwd.normalized.array().rowwise() * value(gamma).row(0).array();
    out.rowwise() += value(beta).row(0);
    Var v = push(OpKind::batch_norm, std::move(out), {x, gamma, beta});
    Node& n = nodes_[v.id];
    n.aux = std::move(fwd.normalized);
    n.aux_row = std::move(fwd.inv_std);
    n.flag = mode == Mode::train;
    return v;
  }

  // -sum[t log p + (1 - t) log(1 - p)] with p clamped to [clamp, 1 - clamp].
  // The clamp is flat, so clamped entries receive zero gradient.
  Var bce_sum(Var probabilities, Var targets, Scalar clamp = Scalar(1e-7)) {
    check_same(probabilities, targets, "bce_sum");
    const Mat& p = value(probabilities);
    const Mat& t = value(targets);
    Scalar total = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const Scalar pc = std::clamp(p.data()[i], clamp, Scalar(1) - clamp);
      total -= t.data()[i] * std::log(pc) + (Scalar(1) - t.data()[i]) * std::log(Scalar(1) - pc);
    }
    Mat out(1, 1);
    out(0, 0) = total;
    Var v = push(OpKind::bce_sum, std::move(out), {probabilities, targets});
    nodes_[v.id].scalar = clamp;
    return v;
  }

  // Seeds d(root)/d(root) = 1 for a 1x1 root and sweeps the tape in reverse.
  void backward(Var root) {
    if (value(root).size() != 1) throw std::invalid_argument("backward: root must be 1x1");
    for (Node& n : nodes_) n.grad.setZero(n.value.rows(), n.value.cols());
    nodes_[root.id].grad(0, 0) = Scalar(1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      if (nodes_[i].needs_grad) propagate(i);
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    OpKind op = OpKind::leaf;
    std::vector<std::size_t> parents;
    bool needs_grad = false;
    Mat aux;
    Row aux_row;
    Scalar scalar = 0;
    Eigen::Index offset = 0;
    bool flag = false;
  };

  static void check_shape(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
  void check_same(Var a, Var b, const char* what) const {
    check_shape(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), what);
  }

  Var push(OpKind op, Mat value, const std::vector<Var>& parents, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.needs_grad = requires_grad;
    n.parents.reserve(parents.size());
    for (Var p : parents) {
      n.parents.push_back(p.id);
      n.needs_grad = n.needs_grad || nodes_.at(p.id).needs_grad;
    }
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Mat& g(std::size_t parent_slot, std::size_t i) { return nodes_[nodes_[i].parents[parent_slot]].grad; }
  const Mat& v(std::size_t parent_slot, std::size_t i) const {
    return nodes_[nodes_[i].parents[parent_slot]].value;
  }
  bool wants(std::size_t parent_slot, std::size_t i) const {
    return nodes_[nodes_[i].parents[parent_slot]].needs_grad;
  }

  void propagate(std::size_t i) {
    const Node& n = nodes_[i];
    const Mat& dy = n.grad;
    switch (n.op) {
      case OpKind::leaf:
        break;
      case OpKind::matmul:
        if (wants(0, i)) g(0, i).noalias() += dy * v(1, i).transpose();
        if (wants(1, i)) g(1, i).noalias() += v(0, i).transpose() * dy;
        break;
      case OpKind::matmul_nt:
        if (wants(0, i)) g(0, i).noalias() += dy * v(1, i);
        if (wants(1, i)) g(1, i).noalias() += dy.transpose() * v(0, i);
        break;
      case OpKind::add:
        if (wants(0, i)) g(0, i) += dy;
        if (wants(1, i)) g(1, i) += dy;
        break;
      case OpKind::sub:
        if (wants(0, i)) g(0, i) += dy;
        if (wants(1, i)) g(1, i) -= dy;
        break;
      case OpKind::hadamard: {
        // Copy the factors first: a == b is legal and both slots alias one grad.
        const Mat da = dy.cwiseProduct(v(1, i));
        const Mat db = dy.cwiseProduct(v(0, i));
        if (wants(0, i)) g(0, i) += da;
        if (wants(1, i)) g(1, i) += db;
        break;
      }
      case OpKind::scale:
        g(0, i) += n.scalar * dy;
        break;
      case OpKind::add_row:
        if (wants(0, i)) g(0, i) += dy;
        if (wants(1, i)) g(1, i) += dy.colwise().sum();
        break;
      case OpKind::mul_row:
        if (wants(0, i)) g(0, i) += Mat(dy.array().rowwise() * v(1, i).row(0).array());
        if (wants(1, i)) g(1, i) += dy.cwiseProduct(v(0, i)).colwise().sum();
        break;
      case OpKind::softmax_rows: {
        const Row inner = dy.cwiseProduct(n.value).rowwise().sum().transpose();
        Mat dx = dy;
        dx.colwise() -= inner.transpose();
        g(0, i) += dx.cwiseProduct(n.value);
        break;
      }
      case OpKind::relu:
        g(0, i) += Mat((v(0, i).array() > Scalar(0)).select(dy, Scalar(0)));
        break;
      case OpKind::sigmoid:
        g(0, i) += Mat(dy.array() * n.value.array() * (Scalar(1) - n.value.array()));
        break;
      case OpKind::batch_norm: {
        const Mat& xhat = n.aux;
        if (wants(2, i)) g(2, i) += dy.colwise().sum();
        if (wants(1, i)) g(1, i) += dy.cwiseProduct(xhat).colwise().sum();
        if (wants(0, i)) {
          const Mat dxhat = dy.array().rowwise() * v(1, i).row(0).array();
          if (n.flag) {
            const Scalar rows = Scalar(dy.rows());
            const Row sum_dxhat = dxhat.colwise().sum();
            const Row sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();
            Mat dx = rows * dxhat;
            dx.rowwise() -= sum_dxhat;
            dx -= Mat(xhat.array().rowwise() * sum_dxhat_xhat.array());
            dx = dx.array().rowwise() * (n.aux_row.array() / rows);
            g(0, i) += dx;
          } else {
            g(0, i) += Mat(dxhat.array().rowwise() * n.aux_row.array());
          }
        }
        break;
      }
      case OpKind::mean_rows: {
        Mat& gx = g(0, i);
        gx.rowwise() += dy.row(0) / Scalar(gx.rows());
        break;
      }
      case OpKind::sum:
        g(0, i).array() += dy(0, 0);
        break;
      case OpKind::slice_cols:
        g(0, i).middleCols(n.offset, dy.cols()) += dy;
        break;
      case OpKind::slice_rows:
        g(0, i).middleRows(n.offset, dy.rows()) += dy;
        break;
      case OpKind::concat_cols: {
        Eigen::Index at = 0;
        for (std::size_t s = 0; s < n.parents.size(); ++s) {
          const Eigen::Index w = v(s, i).cols();
          if (wants(s, i)) g(s, i) += dy.middleCols(at, w);
          at += w;
        }
        break;
      }
      case OpKind::concat_rows: {
        Eigen::Index at = 0;
        for (std::size_t s = 0; s < n.parents.size(); ++s) {
          const Eigen::Index h = v(s, i).rows();
          if (wants(s, i)) g(s, i) += dy.middleRows(at, h);
          at += h;
        }
        break;
      }
      case OpKind::bce_sum: {
        if (!wants(0, i)) break;
        const Mat& p = v(0, i);
        const Mat& t = v(1, i);
        Mat& gp = g(0, i);
        const Scalar clamp = n.scalar;
        for (Eigen::Index k = 0; k < p.size(); ++k) {
          const Scalar pk = p.data()[k];
          if (pk < clamp || pk > Scalar(1) - clamp) continue;
          const Scalar tk = t.data()[k];
          gp.data()[k] += dy(0, 0) * (-tk / pk + (Scalar(1) - tk) / (Scalar(1) - pk));
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

using Tape = BasicTape<double>;

// Composite helpers built from the primitive ops.

// mean((a - b)^2) over all entries, as a 1x1 node.
template <typename Scalar>
Var mse(BasicTape<Scalar>& tape, Var a, Var b) {
  const Var diff = tape.sub(a, b);
  const auto count = static_cast<Scalar>(tape.value(diff).size());
  return tape.scale(tape.sum(tape.hadamard(diff, diff)), Scalar(1) / count);
}

// x W + b for a 1 x out bias row.
template <typename Scalar>
Var linear(BasicTape<Scalar>& tape, Var x, Var weight, Var bias) {
  return tape.add_row(tape.matmul(x, weight), bias);
}

}  // namespace goat
