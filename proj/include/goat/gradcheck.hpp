#pragma once

#include "goat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace goat {

// A flat view over a set of named parameter matrices, used to move between
// model storage and the flat vectors the gradient checker perturbs.
template <typename Scalar>
class BasicParameterPack {
 public:
  struct Entry {
    std::string name;
    Scalar* data;
    Eigen::Index size;
  };

  template <typename Derived>
  void add(std::string name, Eigen::PlainObjectBase<Derived>& m) {
    entries_.push_back({std::move(name), m.data(), m.size()});
  }
  const std::vector<Entry>& entries() const { return entries_; }

  Eigen::Index size() const {
    Eigen::Index n = 0;
    for (const auto& e : entries_) n += e.size;
    return n;
  }

  VectorX<Scalar> flatten() const {
    VectorX<Scalar> out(size());
    Eigen::Index at = 0;
    for (const auto& e : entries_) {
      out.segment(at, e.size) = Eigen::Map<const VectorX<Scalar>>(e.data, e.size);
      at += e.size;
    }
    return out;
  }

  void assign(const VectorX<Scalar>& flat) {
    if (flat.size() != size()) throw std::invalid_argument("ParameterPack::assign: size mismatch");
    Eigen::Index at = 0;
    for (auto& e : entries_) {
      Eigen::Map<VectorX<Scalar>>(e.data, e.size) = flat.segment(at, e.size);
      at += e.size;
    }
  }

  // Name of the matrix holding flat index `index`, with the in-matrix offset.
  std::string describe(Eigen::Index index) const {
    for (const auto& e : entries_) {
      if (index < e.size) return e.name + "[" + std::to_string(index) + "]";
      index -= e.size;
    }
    return "<out of range>";
  }

 private:
  std::vector<Entry> entries_;
};

using ParameterPack = BasicParameterPack<double>;

struct GradientCheckReport {
  double max_relative_error = 0.0;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  Eigen::Index parameter_count = 0;
};

class GradientCheckError : public std::runtime_error {
 public:
  GradientCheckError(const GradientCheckReport& report, const std::string& what)
      : std::runtime_error(what), report_(report) {}
  const GradientCheckReport& report() const { return report_; }

 private:
  GradientCheckReport report_;
};

// Objective returns f(theta) and, when `grad` is non-null, writes the
// analytic gradient into it.
template <typename Scalar>
using Objective = std::function<Scalar(const VectorX<Scalar>& theta, VectorX<Scalar>* grad)>;

// Compares the analytic gradient against central differences:
//   max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8),   step h = 1e-5.
template <typename Scalar>
GradientCheckReport check_gradients(const Objective<Scalar>& f, const VectorX<Scalar>& theta,
                                    Scalar step = Scalar(1e-5)) {
  VectorX<Scalar> analytic(theta.size());
  f(theta, &analytic);
  GradientCheckReport report;
  report.parameter_count = theta.size();
  VectorX<Scalar> probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + step;
    const Scalar up = f(probe, nullptr);
    probe[i] = theta[i] - step;
    const Scalar down = f(probe, nullptr);
    probe[i] = theta[i];
    const Scalar numeric = (up - down) / (Scalar(2) * step);
    const Scalar denom = std::max({std::abs(analytic[i]), std::abs(numeric), Scalar(1e-8)});
    const Scalar rel = std::abs(analytic[i] - numeric) / denom;
    if (report.worst_index < 0 || rel > report.max_relative_error) {
      report.max_relative_error = static_cast<double>(rel);
      report.worst_index = i;
      report.analytic = static_cast<double>(analytic[i]);
      report.numeric = static_cast<double>(numeric);
    }
  }
  return report;
}

// Throws GradientCheckError naming the offending parameter when the report
// exceeds `tolerance`.
inline void require_gradients(const GradientCheckReport& report, double tolerance,
                              const std::string& label = "parameter") {
  if (report.max_relative_error < tolerance) return;
  throw GradientCheckError(report, "gradient check failed at " + label + " (flat index " +
                                       std::to_string(report.worst_index) +
                                       "): analytic=" + std::to_string(report.analytic) +
                                       " numeric=" + std::to_string(report.numeric) +
                                       " rel=" + std::to_string(report.max_relative_error));
}

}  // namespace goat
