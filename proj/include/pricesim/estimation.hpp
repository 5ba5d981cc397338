#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "pricesim/demand_env.hpp"
#include "pricesim/errors.hpp"
#include "pricesim/linalg.hpp"
#include "pricesim/link.hpp"

namespace pricesim {

/// One observed sale opportunity: design u = (x', p)', the perturbation that was
/// applied to the posted price, and the 0/1 purchase outcome.
struct SalesRecord {
  long t = 0;
  int product = 0;
  Vector u;
  double delta = 0.0;
  int outcome = 0;

  double price() const { return u[u.size() - 1]; }
  auto x() const { return u.head(u.size() - 1); }
};

/// Contiguous, row-major view of design rows plus outcomes. The MLE consumes a
/// list of these so that pooled data is never copied.
struct RecordBlock {
  std::span<const double> design;
  std::span<const double> outcome;

  std::size_t size() const { return outcome.size(); }
};

/// Per-product sales log with the running statistics every estimator needs:
///   V    = I + sum u u'        (GLM Fisher matrix)
///   Vbar = I + sum x x'        (alpha-only Fisher matrix)
///   sum Delta d, sum Delta^2, sum x d, sum x p.
class ProductHistory {
public:
  explicit ProductHistory(int d = 1)
      : d_(d), V_(Matrix::Identity(d + 2, d + 2)), Vbar_(Matrix::Identity(d + 1, d + 1)),
        sum_x_d_(Vector::Zero(d + 1)), sum_x_p_(Vector::Zero(d + 1)) {}

  int dimension() const { return d_; }
  std::size_t count() const { return outcomes_.size(); }
  bool empty() const { return outcomes_.empty(); }

  void append(const SalesRecord& r) {
    const auto dim = static_cast<Eigen::Index>(d_ + 2);
    if (r.u.size() != dim) throw InvalidInput("design vector has wrong length");
    if (r.outcome != 0 && r.outcome != 1) throw InvalidInput("outcome must be 0 or 1");
    design_.insert(design_.end(), r.u.data(), r.u.data() + dim);
    outcomes_.push_back(static_cast<double>(r.outcome));
    deltas_.push_back(r.delta);
    periods_.push_back(r.t);
    product_ = r.product;

    V_.noalias() += r.u * r.u.transpose();
    const auto x = r.u.head(dim - 1);
    Vbar_.noalias() += x * x.transpose();
    sum_delta_d_ += r.delta * r.outcome;
    sum_delta_sq_ += r.delta * r.delta;
    sum_x_d_ += x * static_cast<double>(r.outcome);
    sum_x_p_ += x * r.price();
  }

  const Matrix& V() const { return V_; }
  const Matrix& Vbar() const { return Vbar_; }
  double sum_delta_d() const { return sum_delta_d_; }
  double sum_delta_sq() const { return sum_delta_sq_; }
  const Vector& sum_x_d() const { return sum_x_d_; }
  const Vector& sum_x_p() const { return sum_x_p_; }

  RecordBlock block() const { return {design_, outcomes_}; }
  /// Records from index `from` onward.
  RecordBlock block(std::size_t from) const {
    const auto dim = static_cast<std::size_t>(d_ + 2);
    return {std::span<const double>(design_).subspan(from * dim), std::span<const double>(outcomes_).subspan(from)};
  }

  SalesRecord record(std::size_t k) const {
    const std::size_t dim = static_cast<std::size_t>(d_ + 2);
    SalesRecord r;
    r.t = periods_[k];
    r.product = product_;
    r.u = Eigen::Map<const Vector>(design_.data() + k * dim, static_cast<Eigen::Index>(dim));
    r.delta = deltas_[k];
    r.outcome = static_cast<int>(outcomes_[k]);
    return r;
  }

  std::vector<SalesRecord> records() const {
    std::vector<SalesRecord> out;
    out.reserve(count());
    for (std::size_t k = 0; k < count(); ++k) out.push_back(record(k));
    return out;
  }

private:
  int d_;
  int product_ = 0;
  std::vector<double> design_;
  std::vector<double> outcomes_;
  std::vector<double> deltas_;
  std::vector<long> periods_;
  Matrix V_;
  Matrix Vbar_;
  double sum_delta_d_ = 0.0;
  double sum_delta_sq_ = 0.0;
  Vector sum_x_d_;
  Vector sum_x_p_;
};

/// Compact interval [lower, upper] (the admissible price-sensitivity set for the
/// linear model).
struct Interval {
  double lower = -1.0;
  double upper = -0.01;

  double project(double v) const { return std::clamp(v, lower, upper); }
  double midpoint() const { return 0.5 * (lower + upper); }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Estimate plus its confidence radius (B for GLM, C for linear).
struct EstimateWithBound {
  ThetaVector theta_hat;
  double bound = 0.0;
};

// ---------------------------------------------------------------------------
// GLM maximum likelihood over the ball ||theta|| <= radius.

/// Objective, gradient and Hessian of the negative log-likelihood at a point.
struct GlmEvaluation {
  double objective = 0.0;
  Vector gradient;
  Matrix hessian;

  GlmEvaluation& operator+=(const GlmEvaluation& o) {
    objective += o.objective;
    gradient += o.gradient;
    hessian += o.hessian;
    return *this;
  }
};

struct MleOptions {
  double gradient_tolerance = 1e-8;
  /// Multiply the tolerance by max(1, record count).
  bool tolerance_per_record = false;
  int max_iterations = 500;
  /// Starting point; projected onto the ball. Zero when absent.
  const Vector* warm_start = nullptr;
  /// Evaluation (with Hessian) of the same data at *warm_start, which saves
  /// the first pass over the records. Ignored without a feasible warm start.
  const GlmEvaluation* warm_evaluation = nullptr;
};

struct MleResult {
  Vector theta;
  double objective = 0.0;
  double projected_gradient_norm = 0.0;
  int iterations = 0;
  std::size_t count = 0;
  /// Evaluation at theta; reusable as a warm evaluation once more data arrives.
  GlmEvaluation evaluation;
};

inline Vector project_to_ball(Vector v, double radius) {
  const double nrm = v.norm();
  if (nrm > radius) v *= radius / nrm;
  return v;
}

namespace detail {

/// Accumulates the per-record terms. Dim is the compile-time row length, or 0
/// for a runtime length; the fixed sizes let the compiler unroll the loops.
template <std::size_t Dim>
void accumulate_glm(std::span<const RecordBlock> blocks, bool logistic, const double* th, std::size_t dim,
                    double& f, double* g, double* h, bool with_hessian) {
  const std::size_t n = Dim ? Dim : dim;
  for (const RecordBlock& b : blocks) {
    const double* row = b.design.data();
    for (std::size_t s = 0; s < b.size(); ++s, row += n) {
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v += row[k] * th[k];
      const double y = b.outcome[s];
      double mu, w, cumulant;
      if (logistic) {
        const double e = std::exp(-std::abs(v));
        const double inv = 1.0 / (1.0 + e);
        mu = v >= 0 ? inv : e * inv;
        w = e * inv * inv;
        cumulant = (v > 0 ? v : 0.0) + std::log1p(e);
      } else {
        mu = v;
        w = 1.0;
        cumulant = 0.5 * v * v;
      }
      f += cumulant - y * v;
      const double r = mu - y;
      for (std::size_t k = 0; k < n; ++k) g[k] += r * row[k];
      if (with_hessian) {
        for (std::size_t j = 0; j < n; ++j) {
          const double wj = w * row[j];
          double* hj = h + j * n;
          for (std::size_t k = j; k < n; ++k) hj[k] += wj * row[k];
        }
      }
    }
  }
}

/// Sum over records of l_s(theta) = m(u's theta) - d_s u_s'theta with its
/// gradient and (optionally) Hessian.
inline void evaluate_glm(std::span<const RecordBlock> blocks, const LinkFunction& link, const Vector& theta,
                         GlmEvaluation& out, bool with_hessian) {
  const auto dim = static_cast<std::size_t>(theta.size());
  double f = 0.0;
  std::vector<double> g(dim, 0.0);
  std::vector<double> h(with_hessian ? dim * dim : 0, 0.0);
  const bool logistic = link.kind == LinkKind::Logistic;
  const auto run = [&]<std::size_t D>() {
    accumulate_glm<D>(blocks, logistic, theta.data(), dim, f, g.data(), h.data(), with_hessian);
  };
  switch (dim) {
  case 3: run.template operator()<3>(); break;
  case 4: run.template operator()<4>(); break;
  case 5: run.template operator()<5>(); break;
  case 6: run.template operator()<6>(); break;
  case 7: run.template operator()<7>(); break;
  case 8: run.template operator()<8>(); break;
  case 9: run.template operator()<9>(); break;
  case 10: run.template operator()<10>(); break;
  case 12: run.template operator()<12>(); break;
  default: run.template operator()<0>(); break;
  }

  out.objective = f;
  out.gradient = Eigen::Map<const Vector>(g.data(), static_cast<Eigen::Index>(dim));
  if (with_hessian) {
    out.hessian.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j)
      for (std::size_t k = j; k < dim; ++k)
        out.hessian(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
            out.hessian(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = h[j * dim + k];
  }
}

/// Minimiser of the quadratic model g'(y - theta) + (y - theta)'H(y - theta)/2
/// over ||y|| <= radius. Interior Newton point when it is feasible, otherwise
/// y(lambda) = (H + lambda I)^{-1}(H theta - g) with ||y(lambda)|| = radius.
/// Handles singular H (fewer records than parameters).
inline Vector ball_newton_target(const Vector& theta, const Vector& g, const Matrix& H, double radius) {
  // Common case: well-conditioned H with an interior Newton point.
  const Eigen::LLT<Matrix> llt(H);
  if (llt.info() == Eigen::Success) {
    const auto& Lm = llt.matrixL();
    const double dmin = Lm.nestedExpression().diagonal().minCoeff();
    const double dmax = Lm.nestedExpression().diagonal().maxCoeff();
    if (dmin > 1e-6 * dmax) {
      Vector y = theta - llt.solve(g);
      if (y.allFinite() && y.norm() <= radius) return y;
    }
  }

  const Eigen::SelfAdjointEigenSolver<Matrix> eig(H);
  const Eigen::Index n = theta.size();
  Vector h = eig.eigenvalues().cwiseMax(0.0);
  const double hmax = std::max(h.maxCoeff(), 0.0);
  const double null_cut = 1e-12 * std::max(1.0, hmax);
  const Matrix& Q = eig.eigenvectors();
  const Vector tb = Q.transpose() * theta;
  const Vector gb = Q.transpose() * g;
  const double g_cut = 1e-12 * std::max(1.0, gb.norm());

  std::vector<bool> is_null(static_cast<std::size_t>(n));
  Vector b(n);
  bool unbounded = false;
  for (Eigen::Index k = 0; k < n; ++k) {
    is_null[static_cast<std::size_t>(k)] = h[k] <= null_cut;
    if (is_null[static_cast<std::size_t>(k)]) {
      h[k] = 0.0;
      if (std::abs(gb[k]) > g_cut) unbounded = true;
    }
    b[k] = h[k] * tb[k] - gb[k];
  }

  Vector y(n);
  if (!unbounded) {
    for (Eigen::Index k = 0; k < n; ++k) y[k] = is_null[static_cast<std::size_t>(k)] ? tb[k] : b[k] / h[k];
    if (y.norm() <= radius) return Q * y;

    // Null-space coordinates are free in the model; if the range-space part
    // alone fits, shrink the null part onto the sphere.
    double range_sq = 0.0, null_sq = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (is_null[static_cast<std::size_t>(k)]) null_sq += tb[k] * tb[k];
      else range_sq += y[k] * y[k];
    }
    if (range_sq <= radius * radius && null_sq > 0.0) {
      const double s = std::sqrt((radius * radius - range_sq) / null_sq);
      for (Eigen::Index k = 0; k < n; ++k)
        if (is_null[static_cast<std::size_t>(k)]) y[k] = s * tb[k];
      return Q * y;
    }
  }

  const auto norm_at = [&](double lambda) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double yk = b[k] / (h[k] + lambda);
      s += yk * yk;
    }
    return std::sqrt(s);
  };
  double lo = 0.0;
  double hi = b.norm() / radius + std::numeric_limits<double>::min();
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (norm_at(mid) > radius) lo = mid;
    else hi = mid;
  }
  for (Eigen::Index k = 0; k < n; ++k) y[k] = b[k] / (h[k] + hi);
  return project_to_ball(Q * y, radius);
}

inline double projected_gradient_norm(const Vector& theta, const Vector& g, double radius) {
  return (theta - project_to_ball(theta - g, radius)).norm();
}

} // namespace detail

inline std::size_t record_count(std::span<const RecordBlock> blocks) {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

/// Objective sum_s [m(u_s'theta) - d_s u_s'theta].
inline double glm_objective(std::span<const RecordBlock> blocks, const LinkFunction& link, const Vector& theta) {
  GlmEvaluation ev;
  detail::evaluate_glm(blocks, link, theta, ev, false);
  return ev.objective;
}

inline Vector glm_gradient(std::span<const RecordBlock> blocks, const LinkFunction& link, const Vector& theta) {
  GlmEvaluation ev;
  detail::evaluate_glm(blocks, link, theta, ev, false);
  return ev.gradient;
}

/// Constrained MLE: projected Newton on the ball with Armijo backtracking,
/// falling back to a projected-gradient step when the Newton direction fails to
/// descend. Empty data returns the origin.
inline MleResult glm_mle(std::span<const RecordBlock> blocks, Eigen::Index dim, const LinkFunction& link,
                         double radius, const MleOptions& opt = {}) {
  MleResult res;
  res.count = record_count(blocks);
  res.theta = Vector::Zero(dim);
  if (res.count == 0) return res;
  bool reuse = false;
  if (opt.warm_start && opt.warm_start->size() == dim) {
    res.theta = project_to_ball(*opt.warm_start, radius);
    reuse = opt.warm_evaluation != nullptr && res.theta == *opt.warm_start &&
            opt.warm_evaluation->hessian.rows() == dim && opt.warm_evaluation->gradient.size() == dim;
  }

  const double tol =
      opt.gradient_tolerance * (opt.tolerance_per_record ? std::max(1.0, static_cast<double>(res.count)) : 1.0);
  constexpr double kArmijo = 1e-4;

  GlmEvaluation cur, trial;
  if (reuse) cur = *opt.warm_evaluation;
  else detail::evaluate_glm(blocks, link, res.theta, cur, true);
  if (!std::isfinite(cur.objective)) throw EstimationError("non-finite likelihood objective");
  double pgn = detail::projected_gradient_norm(res.theta, cur.gradient, radius);

  int iter = 0;
  for (; iter < opt.max_iterations && pgn > tol; ++iter) {
    bool accepted = false;
    const Vector target = detail::ball_newton_target(res.theta, cur.gradient, cur.hessian, radius);
    const Vector dir = target - res.theta;
    const double slope = cur.gradient.dot(dir);
    const double noise = 1e-13 * (std::abs(cur.objective) + 1.0);

    if (slope < 0) {
      double step = 1.0;
      for (int k = 0; k < 40; ++k, step *= 0.5) {
        const Vector cand = res.theta + step * dir;
        detail::evaluate_glm(blocks, link, cand, trial, true);
        if (!std::isfinite(trial.objective)) continue;
        const double cand_pgn = detail::projected_gradient_norm(cand, trial.gradient, radius);
        // Near the optimum the objective is flat to round-off; then accept on
        // a gradient decrease instead.
        if (trial.objective <= cur.objective + kArmijo * step * slope ||
            (trial.objective <= cur.objective + noise && cand_pgn < 0.5 * pgn)) {
          res.theta = cand;
          std::swap(cur, trial);
          pgn = cand_pgn;
          accepted = true;
          break;
        }
      }
    }

    if (!accepted) {
      const double lipschitz = std::max(cur.hessian.diagonal().sum(), 1e-12);
      double step = 1.0 / lipschitz;
      for (int k = 0; k < 60; ++k, step *= 0.5) {
        const Vector cand = project_to_ball(res.theta - step * cur.gradient, radius);
        detail::evaluate_glm(blocks, link, cand, trial, true);
        if (!std::isfinite(trial.objective)) continue;
        if (trial.objective <= cur.objective - kArmijo / step * (cand - res.theta).squaredNorm() &&
            trial.objective < cur.objective) {
          res.theta = cand;
          std::swap(cur, trial);
          pgn = detail::projected_gradient_norm(res.theta, cur.gradient, radius);
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break; // stalled at round-off level
  }

  res.objective = cur.objective;
  res.evaluation = std::move(cur);
  res.projected_gradient_norm = pgn;
  res.iterations = iter;
  if (!std::isfinite(res.objective) || !res.theta.allFinite())
    throw EstimationError("likelihood solver diverged");
  return res;
}

inline MleResult glm_mle(const RecordBlock& block, Eigen::Index dim, const LinkFunction& link, double radius,
                         const MleOptions& opt = {}) {
  return glm_mle(std::span<const RecordBlock>(&block, 1), dim, link, radius, opt);
}

/// Convenience overload over materialised records.
inline ThetaVector glm_mle(std::span<const SalesRecord> records, int d, const LinkFunction& link, double radius,
                           const MleOptions& opt = {}) {
  const auto dim = static_cast<std::size_t>(d + 2);
  std::vector<double> design;
  std::vector<double> outcomes;
  design.reserve(records.size() * dim);
  for (const auto& r : records) {
    if (r.u.size() != static_cast<Eigen::Index>(dim)) throw InvalidInput("design vector has wrong length");
    design.insert(design.end(), r.u.data(), r.u.data() + dim);
    outcomes.push_back(r.outcome);
  }
  const RecordBlock block{design, outcomes};
  return ThetaVector::from_stacked(glm_mle(block, static_cast<Eigen::Index>(dim), link, radius, opt).theta);
}

// ---------------------------------------------------------------------------
// Confidence bounds.

/// B = sqrt(c (d+2) log(1+t)) / sqrt(lambda_min(V)), given lambda_min directly.
inline double confidence_bound_glm_from_eigen(double lambda_min, double t, double c, int d) {
  return std::sqrt(c * (d + 2) * std::log1p(std::max(t, 0.0))) / std::sqrt(lambda_min);
}

inline double confidence_bound_glm(const Matrix& V, double t, double c, int d) {
  return confidence_bound_glm_from_eigen(min_eigenvalue(V), t, c, d);
}

/// C = sqrt(Cb^2 + Ca^2 / lambda_min(Vbar)) with
///   Cb = c1 sqrt(log t) / sqrt(S),  Ca = c2 sqrt(d+1) log t sqrt(count) / sqrt(S),
/// S = sum Delta^2. S == 0 gives +inf (nothing learned about beta yet).
inline double confidence_bound_linear_from_eigen(double sum_delta_sq, std::size_t count, double lambda_min_vbar,
                                                 int d, double t, double c1, double c2) {
  if (sum_delta_sq <= 0.0) return std::numeric_limits<double>::infinity();
  const double log_t = t > 1.0 ? std::log(t) : 0.0;
  const double inv_root = 1.0 / std::sqrt(sum_delta_sq);
  const double cb = c1 * std::sqrt(log_t) * inv_root;
  const double ca = c2 * std::sqrt(d + 1.0) * log_t * inv_root * std::sqrt(static_cast<double>(count));
  return std::sqrt(cb * cb + ca * ca / lambda_min_vbar);
}

inline double confidence_bound_linear(double sum_delta_sq, std::size_t count, const Matrix& Vbar, double t,
                                      double c1, double c2) {
  if (sum_delta_sq <= 0.0) return std::numeric_limits<double>::infinity();
  return confidence_bound_linear_from_eigen(sum_delta_sq, count, min_eigenvalue(Vbar),
                                            static_cast<int>(Vbar.rows()) - 1, t, c1, c2);
}

// ---------------------------------------------------------------------------
// Separated estimators for the linear model.

/// Proj_B(sum Delta d / sum Delta^2); the midpoint of B when no perturbation
/// has been observed.
inline double beta_hat_linear(double sum_delta_d, double sum_delta_sq, const Interval& B) {
  if (!(B.lower <= B.upper)) throw ConfigError("beta_interval", "empty interval");
  if (sum_delta_sq <= 0.0) return B.midpoint();
  return B.project(sum_delta_d / sum_delta_sq);
}

/// argmin_a sum (d_s - a'x_s - beta p_s)^2 + lambda ||a||^2 from sufficient
/// statistics: xtx = sum x x', sum_x_d = sum x d, sum_x_p = sum x p.
inline Vector alpha_hat_ridge(const Matrix& xtx, const Vector& sum_x_d, const Vector& sum_x_p, double beta_hat,
                              double lambda_reg = 1.0) {
  if (!(lambda_reg > 0)) throw ConfigError("lambda_reg", "must be positive");
  Matrix gram = xtx;
  gram.diagonal().array() += lambda_reg;
  return gram.llt().solve(sum_x_d - beta_hat * sum_x_p);
}

inline Vector alpha_hat_ridge(std::span<const SalesRecord> records, int d, double beta_hat,
                              double lambda_reg = 1.0) {
  Matrix xtx = Matrix::Zero(d + 1, d + 1);
  Vector sxd = Vector::Zero(d + 1), sxp = Vector::Zero(d + 1);
  for (const auto& r : records) {
    const Vector x = r.x();
    xtx.noalias() += x * x.transpose();
    sxd += x * static_cast<double>(r.outcome);
    sxp += x * r.price();
  }
  return alpha_hat_ridge(xtx, sxd, sxp, beta_hat, lambda_reg);
}

// ---------------------------------------------------------------------------

struct CovariateVariation {
  bool holds = true;
  /// lambda_min(sum x x') - c0 count^kappa; +inf while count < t0.
  double margin = std::numeric_limits<double>::infinity();
};

/// Data check that the covariates of one product keep enough variation:
/// true iff count < t0 or lambda_min(sum x x') >= c0 count^kappa.
inline CovariateVariation covariate_variation_check(std::span<const SalesRecord> records, int d, double c0,
                                                    double kappa, std::size_t t0) {
  if (!(kappa > 0.5 && kappa <= 1.0)) throw ConfigError("kappa", "must lie in (1/2, 1]");
  if (records.size() < t0) return {};
  Matrix xtx = Matrix::Zero(d + 1, d + 1);
  for (const auto& r : records) {
    const Vector x = r.x();
    xtx.noalias() += x * x.transpose();
  }
  const double margin = min_eigenvalue(xtx) - c0 * std::pow(static_cast<double>(records.size()), kappa);
  return {margin >= 0.0, margin};
}

} // namespace pricesim
