#pragma once

#include "goat/tensor.hpp"

#include <stdexcept>

namespace goat {

enum class Mode { train, eval };

// Per-column batch normalization over the rows of a matrix.
template <typename Scalar>
struct BatchNormState {
  RowVectorX<Scalar> gamma;
  RowVectorX<Scalar> beta;
  RowVectorX<Scalar> running_mean;
  RowVectorX<Scalar> running_var;
  Scalar epsilon = Scalar(1e-5);
  Scalar momentum = Scalar(0.1);

  BatchNormState() = default;
  explicit BatchNormState(Eigen::Index width)
      : gamma(RowVectorX<Scalar>::Ones(width)),
        beta(RowVectorX<Scalar>::Zero(width)),
        running_mean(RowVectorX<Scalar>::Zero(width)),
        running_var(RowVectorX<Scalar>::Ones(width)) {}

  Eigen::Index width() const { return gamma.size(); }
};

// Normalized input and the per-column 1/sqrt(var + eps) actually used.
template <typename Scalar>
struct BatchNormForward {
  MatrixX<Scalar> normalized;
  RowVectorX<Scalar> inv_std;
  RowVectorX<Scalar> batch_mean;
  RowVectorX<Scalar> batch_var;  // biased
};

template <typename Derived>
BatchNormForward<typename Derived::Scalar> batch_norm_normalize(
    const Eigen::MatrixBase<Derived>& x, const BatchNormState<typename Derived::Scalar>& state,
    Mode mode) {
  using Scalar = typename Derived::Scalar;
  if (x.cols() != state.width()) throw std::invalid_argument("batch_norm: width mismatch");
  BatchNormForward<Scalar> out;
  if (mode == Mode::train) {
    if (x.rows() < 2) throw std::invalid_argument("batch_norm: train mode needs at least 2 rows");
    out.batch_mean = x.colwise().mean();
    MatrixX<Scalar> centered = x.rowwise() - out.batch_mean;
    out.batch_var = centered.array().square().colwise().mean().matrix();
    out.inv_std = (out.batch_var.array() + state.epsilon).rsqrt().matrix();
    out.normalized = centered.array().rowwise() * out.inv_std.array();
  } else {
    out.batch_mean = state.running_mean;
    out.batch_var = state.running_var;
    out.inv_std = (state.running_var.array() + state.epsilon).rsqrt().matrix();
    out.normalized = (x.rowwise() - state.running_mean).array().rowwise() * out.inv_std.array();
  }
  return out;
}

// Exponential moving average; running variance uses the unbiased estimate.
template <typename Scalar>
void batch_norm_update_running(BatchNormState<Scalar>& state, const BatchNormForward<Scalar>& fwd,
                               Eigen::Index rows) {
  const Scalar unbias = Scalar(rows) / Scalar(rows - 1);
  state.running_mean = (Scalar(1) - state.momentum) * state.running_mean + state.momentum * fwd.batch_mean;
  state.running_var =
      (Scalar(1) - state.momentum) * state.running_var + state.momentum * unbias * fwd.batch_var;
}

// Value-only batch norm. In train mode the running statistics are updated.
template <typename Derived>
MatrixX<typename Derived::Scalar> batch_norm(const Eigen::MatrixBase<Derived>& x,
                                             BatchNormState<typename Derived::Scalar>& state,
                                             Mode mode) {
  auto fwd = batch_norm_normalize(x, state, mode);
  if (mode == Mode::train) batch_norm_update_running(state, fwd, x.rows());
  MatrixX<typename Derived::Scalar> y = fwd.normalized.array().rowwise() * state.gamma.array();
  y.rowwise() += state.beta;
  return y;
}

}  // namespace goat
