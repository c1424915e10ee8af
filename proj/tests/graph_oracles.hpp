#pragma once

#include "gradient_suite.hpp"

#include "goat/dataset.hpp"

#include <algorithm>

namespace goat::testing {

inline ActorFrame random_frame(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
  ActorFrame f;
  f.features = uniform(rng, n, d);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index a = 0; a < n; ++a) f.positions.push_back({u(rng), u(rng)});
  return f;
}

// Explicit loop: out_i = sigma(sum_j A_ij (H_j W)).
inline Matrix gcn_oracle(const Matrix& h, const Matrix& a, const Matrix& w, bool relu) {
  const Eigen::Index n = h.rows(), d_in = h.cols(), d_out = w.cols();
  Matrix out = Matrix::Zero(n, d_out);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d_out; ++c) {
      double total = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        double hw = 0.0;
        for (Eigen::Index k = 0; k < d_in; ++k) hw += h(j, k) * w(k, c);
        total += a(i, j) * hw;
      }
      out(i, c) = relu ? std::max(total, 0.0) : total;
    }
  }
  return out;
}

}  // namespace goat::testing
