#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "sfpp/autograd.hpp"

namespace sfpp {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  Eigen::Index worst_index = -1;
  bool pass = false;
};

// Relative error uses max(|analytic|, |numeric|, floor) as denominator so
// entries that are zero on both sides do not divide by zero.
inline constexpr double kGradCheckFloor = 1e-4;

inline GradCheckReport compare_gradients(const std::function<double(const Tensor<double>&)>& f,
                                         const Tensor<double>& x, const Tensor<double>& analytic,
                                         double eps, double tol) {
  if (analytic.shape() != x.shape()) throw ShapeError("gradient check: analytic gradient shape mismatch");
  GradCheckReport report;
  Tensor<double> probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double abs_err = std::abs(numeric - analytic[i]);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), kGradCheckFloor});
    const double rel = abs_err / denom;
    report.max_abs_err = std::max(report.max_abs_err, abs_err);
    if (rel > report.max_rel_err || report.worst_index < 0) {
      report.max_rel_err = std::max(report.max_rel_err, rel);
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

// f builds a scalar on a fresh 64-bit tape from the variable it is handed.
using TapeFunction = std::function<Var(Tape<double>&, Var)>;

inline double evaluate(const TapeFunction& f, const Tensor<double>& x) {
  Tape<double> tape;
  const Var out = f(tape, tape.constant(x));
  return tape.value(out).item();
}

inline Tensor<double> analytic_gradient(const TapeFunction& f, const Tensor<double>& x) {
  Tape<double> tape;
  const Var in = tape.variable(x);
  const Var out = f(tape, in);
  tape.backward(out);
  return tape.grad(in);
}

inline GradCheckReport finite_diff_check(const TapeFunction& f, const Tensor<double>& x,
                                         double eps = 1e-5, double tol = 1e-4) {
  return compare_gradients([&f](const Tensor<double>& p) { return evaluate(f, p); }, x,
                           analytic_gradient(f, x), eps, tol);
}

}  // namespace sfpp
