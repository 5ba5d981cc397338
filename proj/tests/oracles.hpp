#pragma once

// Reference computations used only by the tests. They deliberately avoid the
// library's own numerical kernels.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Smallest eigenvalue of a symmetric positive definite matrix by inverse
/// power iteration (LU solves), finished with Rayleigh-quotient iteration.
inline double min_eigenvalue_inverse_power(const Eigen::MatrixXd& M) {
  const auto n = M.rows();
  Eigen::VectorXd y = Eigen::VectorXd::Ones(n).normalized();
  for (Eigen::Index k = 0; k < n; ++k) y[k] += 0.01 * static_cast<double>(k + 1);
  y.normalize();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  double rq = y.dot(M * y);
  for (int it = 0; it < 20000; ++it) {
    y = lu.solve(y).normalized();
    const double next = y.dot(M * y);
    const bool done = std::abs(next - rq) <= 1e-15 * std::abs(next);
    rq = next;
    if (done) break;
  }
  for (int it = 0; it < 5; ++it) {
    const Eigen::MatrixXd shifted = M - (rq - 1e-13 * std::max(1.0, std::abs(rq))) * Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd z = shifted.fullPivLu().solve(y);
    if (!z.allFinite() || z.norm() == 0) break;
    y = z.normalized();
    rq = y.dot(M * y);
  }
  return rq;
}

/// argmax of f on a uniform grid of `points` over [lo, hi], refined by the
/// vertex of the parabola through the best point and its neighbours.
struct GridMax {
  double x;
  double value;
};

inline GridMax grid_argmax(const std::function<double(double)>& f, double lo, double hi, long points) {
  const double h = (hi - lo) / static_cast<double>(points - 1);
  long best = 0;
  double best_v = f(lo);
  for (long k = 1; k < points; ++k) {
    const double v = f(lo + static_cast<double>(k) * h);
    if (v > best_v) {
      best_v = v;
      best = k;
    }
  }
  if (best == 0 || best == points - 1) return {lo + static_cast<double>(best) * h, best_v};
  const double x0 = lo + static_cast<double>(best) * h;
  const double fm = f(x0 - h), fp = f(x0 + h);
  const double denom = fm - 2.0 * best_v + fp;
  if (denom >= 0) return {x0, best_v};
  const double x = x0 + 0.5 * h * (fm - fp) / denom;
  return {x, std::max(best_v, f(x))};
}

/// Central finite-difference gradient.
inline Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                                  const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd a = x, b = x;
    a[k] += h;
    b[k] -= h;
    g[k] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

} // namespace oracle
