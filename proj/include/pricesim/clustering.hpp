#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <vector>

#include "pricesim/errors.hpp"
#include "pricesim/linalg.hpp"
#include "pricesim/random.hpp"

namespace pricesim {

struct Neighborhood {
  int anchor = 0;
  std::vector<int> members; // ascending

  bool contains(int i) const { return std::binary_search(members.begin(), members.end(), i); }
  std::size_t size() const { return members.size(); }
};

/// Products whose individual estimates lie within the summed confidence radii
/// (plus a slack gamma0 for relaxed clusters) of the anchor's estimate:
///   { i : ||theta_i - theta_anchor|| <= B_i + B_anchor + gamma0 }.
/// Infinite bounds admit everything.
inline Neighborhood build_neighborhood(int anchor, std::span<const Vector> estimates, std::span<const double> bounds,
                                       double gamma0 = 0.0) {
  if (estimates.size() != bounds.size()) throw InvalidInput("estimates and bounds differ in length");
  if (anchor < 0 || static_cast<std::size_t>(anchor) >= estimates.size()) throw InvalidInput("anchor out of range");
  Neighborhood nb{anchor, {}};
  const Vector& center = estimates[static_cast<std::size_t>(anchor)];
  const double anchor_bound = bounds[static_cast<std::size_t>(anchor)];
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double radius = bounds[i] + anchor_bound + gamma0;
    if (static_cast<int>(i) == anchor || (estimates[i] - center).norm() <= radius)
      nb.members.push_back(static_cast<int>(i));
  }
  return nb;
}

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<Vector> centers;
  double inertia = 0.0;
  int iterations = 0;
  /// Inertia after every assignment step of the returned restart.
  std::vector<double> inertia_trace;

  std::vector<int> members(int cluster) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == cluster) out.push_back(static_cast<int>(i));
    return out;
  }
};

namespace detail {

// Assigns each point to its nearest center (ties to the lowest index) and
// returns the inertia.
inline double assign_points(const Matrix& pts, const Matrix& centers, std::vector<int>& assignment,
                            std::vector<double>& dist2) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index k = 0; k < centers.cols(); ++k) {
      const double d2 = (pts.col(i) - centers.col(k)).squaredNorm();
      if (d2 < best) {
        best = d2;
        arg = static_cast<int>(k);
      }
    }
    assignment[static_cast<std::size_t>(i)] = arg;
    dist2[static_cast<std::size_t>(i)] = best;
    inertia += best;
  }
  return inertia;
}

// k-means++: first center uniform, then each next one with probability
// proportional to squared distance from the nearest chosen center.
inline Matrix seed_plus_plus(const Matrix& pts, int K, Rng& rng) {
  const Eigen::Index n = pts.cols();
  Matrix centers(pts.rows(), K);
  centers.col(0) = pts.col(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = (pts.col(i) - centers.col(0)).squaredNorm();
  for (int k = 1; k < K; ++k) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
    } else {
      const double u = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (u < acc && d2[static_cast<std::size_t>(i)] > 0) {
          pick = i;
          break;
        }
      }
    }
    centers.col(k) = pts.col(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], (pts.col(i) - centers.col(k)).squaredNorm());
  }
  return centers;
}

} // namespace detail

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// inertia wins. A cluster that empties is reseeded with the point farthest
/// from its current center.
inline KMeansResult kmeans(std::span<const Vector> points, int K, int restarts, int max_iter, Rng& rng) {
  if (K < 1) throw ConfigError("K", "must be at least 1");
  if (static_cast<std::size_t>(K) > points.size()) throw ConfigError("K", "more clusters than points");
  if (restarts < 1) throw ConfigError("restarts", "must be at least 1");

  const auto n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index dim = points.front().size();
  Matrix pts(dim, n);
  for (Eigen::Index i = 0; i < n; ++i) pts.col(i) = points[static_cast<std::size_t>(i)];

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  std::vector<int> assignment(static_cast<std::size_t>(n));
  std::vector<double> dist2(static_cast<std::size_t>(n));

  for (int r = 0; r < restarts; ++r) {
    Matrix centers = detail::seed_plus_plus(pts, K, rng);
    std::vector<double> trace;
    double inertia = detail::assign_points(pts, centers, assignment, dist2);
    trace.push_back(inertia);
    int iter = 0;
    for (; iter < max_iter; ++iter) {
      Matrix sums = Matrix::Zero(dim, K);
      std::vector<int> counts(static_cast<std::size_t>(K), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.col(assignment[static_cast<std::size_t>(i)]) += pts.col(i);
        ++counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])];
      }
      for (int k = 0; k < K; ++k) {
        if (counts[static_cast<std::size_t>(k)] > 0) {
          centers.col(k) = sums.col(k) / counts[static_cast<std::size_t>(k)];
          continue;
        }
        const auto far = static_cast<Eigen::Index>(
            std::max_element(dist2.begin(), dist2.end()) - dist2.begin());
        centers.col(k) = pts.col(far);
        dist2[static_cast<std::size_t>(far)] = 0.0;
      }
      std::vector<int> previous = assignment;
      inertia = detail::assign_points(pts, centers, assignment, dist2);
      trace.push_back(inertia);
      if (assignment == previous) {
        ++iter;
        break;
      }
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.assignment = assignment;
      best.iterations = iter;
      best.inertia_trace = std::move(trace);
      best.centers.clear();
      for (int k = 0; k < K; ++k) best.centers.emplace_back(centers.col(k));
    }
  }
  return best;
}

} // namespace pricesim
