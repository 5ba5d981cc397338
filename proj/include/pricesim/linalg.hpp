#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "pricesim/errors.hpp"

namespace pricesim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct SymmetricEigen {
  Vector values;  // ascending
  Matrix vectors; // column k pairs with values[k]
};

inline void check_symmetric(const Matrix& m, double tolerance = 1e-12) {
  if (m.rows() != m.cols()) throw InvalidInput("matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > tolerance * scale)
        throw InvalidInput("matrix is not symmetric");
}

/// Cyclic Jacobi eigensolver for small dense symmetric matrices. Rotations are
/// applied until the off-diagonal mass is at round-off level; the diagonal then
/// holds the eigenvalues to near full relative precision.
inline SymmetricEigen symmetric_eigen(const Matrix& input, int max_sweeps = 64) {
  const Eigen::Index n = input.rows();
  Matrix a = input;
  Matrix v = Matrix::Identity(n, n);

  const double fro = a.norm();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-17 * fro || off == 0.0) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = tau >= 0 ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                  : -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index l, Eigen::Index r) { return a(l, l) < a(r, r); });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

/// Smallest eigenvalue of a symmetric matrix. Throws InvalidInput when the
/// matrix is asymmetric beyond 1e-12 (relative to its largest entry).
inline double min_eigenvalue(const Matrix& m) {
  check_symmetric(m);
  if (m.rows() == 0) throw InvalidInput("empty matrix");
  return symmetric_eigen(m).values[0];
}

} // namespace pricesim
