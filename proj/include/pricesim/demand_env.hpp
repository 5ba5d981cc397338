#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "pricesim/errors.hpp"
#include "pricesim/linalg.hpp"
#include "pricesim/link.hpp"
#include "pricesim/random.hpp"

namespace pricesim {

/// Demand parameter (alpha, beta). alpha has d+1 entries, intercept first.
struct ThetaVector {
  Vector alpha;
  double beta = 0.0;

  Eigen::Index dimension() const { return alpha.size() - 1; }

  /// (alpha', beta)' as one vector of length d+2.
  Vector stacked() const {
    Vector out(alpha.size() + 1);
    out.head(alpha.size()) = alpha;
    out[alpha.size()] = beta;
    return out;
  }

  static ThetaVector from_stacked(const Vector& v) {
    return ThetaVector{v.head(v.size() - 1), v[v.size() - 1]};
  }

  static ThetaVector zero(int d) { return ThetaVector{Vector::Zero(d + 1), 0.0}; }

  double norm() const { return std::sqrt(alpha.squaredNorm() + beta * beta); }
};

struct PriceBounds {
  double lower = 0.0;
  double upper = 10.0;

  double width() const { return upper - lower; }
  bool contains(double p) const { return p >= lower && p <= upper; }
  friend bool operator==(const PriceBounds&, const PriceBounds&) = default;
};

/// Covariates of one product in one period: z in R^d and x = (1, z')'.
struct ContextVector {
  Vector z;
  Vector x;

  static ContextVector from_raw(Vector raw) {
    ContextVector out;
    out.x.resize(raw.size() + 1);
    out.x[0] = 1.0;
    out.x.tail(raw.size()) = raw;
    out.z = std::move(raw);
    return out;
  }

  /// u = (x', p)'.
  Vector design(double price) const {
    Vector u(x.size() + 1);
    u.head(x.size()) = x;
    u[x.size()] = price;
    return u;
  }
};

/// Cubic utility used by the misspecified ground truth:
///   f(z, p) = c0 + sum c1 z + sum c2 z^2 + sum c3 z^3 + b1 p + b2^2 p^2 + b3 p^3
/// with demand 1 / (1 + exp(f)). b2 is stored as drawn and squared at use.
struct MisspecCoefficients {
  double c0 = 0.0;
  Vector c1, c2, c3;
  double b1 = 0.0, b2 = 0.0, b3 = 0.0;

  double utility(const Vector& z, double p) const {
    double f = c0;
    for (Eigen::Index k = 0; k < z.size(); ++k) {
      const double zk = z[k];
      f += c1[k] * zk + c2[k] * zk * zk + c3[k] * zk * zk * zk;
    }
    return f + b1 * p + b2 * b2 * p * p + b3 * p * p * p;
  }

  double demand(const Vector& z, double p) const {
    const double f = utility(z, p);
    if (f >= 0) {
      const double e = std::exp(-f);
      return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(f));
  }
};

struct CovariateMode {
  enum class Kind { IidUniform, AlmostStatic };
  Kind kind = Kind::IidUniform;
  int coordinate = 0; // almost-static only
  int period = 100;   // almost-static only

  static CovariateMode iid() { return {}; }
  static CovariateMode almost_static(int coordinate, int period) {
    return {Kind::AlmostStatic, coordinate, period};
  }
  friend bool operator==(const CovariateMode&, const CovariateMode&) = default;
};

/// Ground-truth world. Immutable once generated; safe to share across threads.
struct ClusterInstance {
  int n = 0;
  int m = 0;
  int d = 0;
  double L = 0.0;
  LinkFunction link;
  PriceBounds price_bounds;
  double gamma0 = 0.0;
  /// Realised minimum distance between cluster centers (+inf when m == 1).
  double gamma = std::numeric_limits<double>::infinity();
  /// Radius of the parameter set every theta_i lies in. Equals L for logistic
  /// instances; the linear construction can exceed L, see generate_cluster_instance.
  double theta_radius = 0.0;
  std::vector<int> assignment;
  std::vector<ThetaVector> centers;
  std::vector<ThetaVector> theta;
  std::vector<double> q;
  std::vector<MisspecCoefficients> misspec; // empty: well-specified GLM
  std::uint64_t seed = 0;

  bool misspecified() const { return !misspec.empty(); }
  int cluster_of(int product) const { return assignment[static_cast<std::size_t>(product)]; }

  std::vector<int> cluster_members(int cluster) const {
    std::vector<int> out;
    for (int i = 0; i < n; ++i)
      if (assignment[static_cast<std::size_t>(i)] == cluster) out.push_back(i);
    return out;
  }

  const ThetaVector& theta_of(int product) const { return theta[static_cast<std::size_t>(product)]; }
};

struct InstanceOptions {
  int n = 100;
  int m = 10;
  int d = 5;
  double L = 10.0;
  LinkFunction link = kLogisticLink;
  double gamma0 = 0.0;
  PriceBounds price_bounds{0.0, 10.0};
  bool misspec = false;
  /// Reject center draws until the minimum inter-center distance reaches this.
  double min_separation = 0.0;
  /// Arrival probabilities; empty means uniform 1/n.
  std::vector<double> q;
  std::uint64_t seed = 0;
};

namespace detail {

inline double min_pairwise_distance(const std::vector<ThetaVector>& points) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < points.size(); ++a)
    for (std::size_t b = a + 1; b < points.size(); ++b)
      best = std::min(best, (points[a].stacked() - points[b].stacked()).norm());
  return best;
}

inline ThetaVector draw_center(const InstanceOptions& o, Rng& rng) {
  const double s = o.L / std::sqrt(o.d + 2.0);
  ThetaVector c{Vector(o.d + 1), 0.0};
  if (o.link.kind == LinkKind::Logistic) {
    for (int k = 0; k <= o.d; ++k) c.alpha[k] = uniform(rng, -s, s);
    c.beta = -s + s * uniform01(rng); // [-s, 0)
  } else {
    c.alpha[0] = uniform(rng, s, 2.0 * s);
    for (int k = 1; k <= o.d; ++k) c.alpha[k] = uniform(rng, 0.0, s);
    c.beta = uniform(rng, -1.05 * s, -0.05 * s);
  }
  return c;
}

inline MisspecCoefficients draw_misspec(const InstanceOptions& o, Rng& rng) {
  const double s = o.L / std::sqrt(o.d + 2.0);
  const double s3 = o.L / std::sqrt(3.0 * (o.d + 2.0));
  MisspecCoefficients mc;
  mc.c0 = uniform(rng, -s, s);
  mc.c1.resize(o.d);
  mc.c2.resize(o.d);
  mc.c3.resize(o.d);
  for (int k = 0; k < o.d; ++k) mc.c1[k] = uniform(rng, -s3, s3);
  for (int k = 0; k < o.d; ++k) mc.c2[k] = uniform(rng, -s3, s3);
  for (int k = 0; k < o.d; ++k) mc.c3[k] = uniform(rng, -s3, s3);
  mc.b1 = -s3 + s3 * uniform01(rng);
  mc.b2 = -s3 + s3 * uniform01(rng);
  mc.b3 = -s3 + s3 * uniform01(rng);
  return mc;
}

} // namespace detail

inline double linear_theta_radius(double L, int d) {
  return L * std::sqrt((4.0 + d + 1.05 * 1.05) / (d + 2.0));
}

inline void validate(const InstanceOptions& o) {
  if (o.n < 1) throw ConfigError("n", "must be at least 1");
  if (o.m < 1) throw ConfigError("m", "must be at least 1");
  if (o.m > o.n) throw ConfigError("m", "cluster count exceeds product count");
  if (o.d < 1) throw ConfigError("d", "must be at least 1");
  if (!(o.L > 0)) throw ConfigError("L", "must be positive");
  if (!(o.gamma0 >= 0)) throw ConfigError("gamma0", "must be nonnegative");
  if (!(o.price_bounds.lower >= 0 && o.price_bounds.lower < o.price_bounds.upper))
    throw ConfigError("price_bounds", "need 0 <= lower < upper");
  if (!o.q.empty()) {
    if (o.q.size() != static_cast<std::size_t>(o.n)) throw ConfigError("q", "length must equal n");
    double total = 0.0;
    for (double qi : o.q) {
      if (!(qi > 0)) throw ConfigError("q", "entries must be positive");
      total += qi;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("q", "must sum to 1");
  }
}

/// Draws a clustered instance.
///
/// Logistic: center alpha entries ~ U[-s, s], beta ~ U[-s, 0) with s = L/sqrt(d+2),
/// so every center lies in the L-ball. Linear: intercept ~ U[s, 2s], covariate
/// coefficients ~ U[0, s], beta ~ U[-1.05s, -0.05s]; this box is not contained
/// in the L-ball, so theta_radius is set to the box's corner norm plus gamma0.
/// With gamma0 > 0 each product gets a per-entry U[-gamma0/sqrt(d+2), +] jitter.
inline ClusterInstance generate_cluster_instance(const InstanceOptions& o, Rng& rng) {
  validate(o);
  ClusterInstance inst;
  inst.n = o.n;
  inst.m = o.m;
  inst.d = o.d;
  inst.L = o.L;
  inst.link = o.link;
  inst.price_bounds = o.price_bounds;
  inst.gamma0 = o.gamma0;
  inst.seed = o.seed;
  inst.theta_radius =
      o.link.kind == LinkKind::Logistic ? o.L : linear_theta_radius(o.L, o.d) + o.gamma0;

  constexpr int kMaxCenterAttempts = 100000;
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxCenterAttempts)
      throw ConfigError("min_separation", "could not draw centers this far apart");
    inst.centers.clear();
    for (int j = 0; j < o.m; ++j) inst.centers.push_back(detail::draw_center(o, rng));
    inst.gamma = detail::min_pairwise_distance(inst.centers);
    if (inst.gamma >= o.min_separation) break;
  }

  // Uniform multinomial assignment, redrawn until every cluster is used. When
  // m is close to n that almost never happens, so after a fixed number of
  // rejections a random set of m products is pinned one per cluster.
  const auto n = static_cast<std::size_t>(o.n);
  inst.assignment.assign(n, 0);
  bool covered = false;
  for (int attempt = 0; attempt < 1000 && !covered; ++attempt) {
    std::vector<int> used(static_cast<std::size_t>(o.m), 0);
    for (auto& a : inst.assignment) {
      a = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(o.m)));
      used[static_cast<std::size_t>(a)] = 1;
    }
    covered = std::all_of(used.begin(), used.end(), [](int u) { return u != 0; });
  }
  if (!covered) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t k = n - 1; k > 0; --k) std::swap(order[k], order[uniform_index(rng, k + 1)]);
    for (int j = 0; j < o.m; ++j) inst.assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = j;
  }

  inst.theta.reserve(n);
  const double jitter = o.gamma0 / std::sqrt(o.d + 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const ThetaVector& center = inst.centers[static_cast<std::size_t>(inst.assignment[i])];
    if (o.gamma0 == 0.0) {
      inst.theta.push_back(center);
      continue;
    }
    // Redraw jitters that leave the parameter ball or flip the price sign.
    double scale = jitter;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 0 && attempt % 1000 == 0) scale *= 0.5;
      ThetaVector t = center;
      for (Eigen::Index k = 0; k < t.alpha.size(); ++k) t.alpha[k] += uniform(rng, -scale, scale);
      t.beta += uniform(rng, -scale, scale);
      if (t.beta < 0 && t.norm() <= inst.theta_radius) {
        inst.theta.push_back(std::move(t));
        break;
      }
    }
  }

  if (o.q.empty())
    inst.q.assign(n, 1.0 / o.n);
  else
    inst.q = o.q;

  if (o.misspec) {
    std::vector<MisspecCoefficients> per_cluster;
    for (int j = 0; j < o.m; ++j) per_cluster.push_back(detail::draw_misspec(o, rng));
    for (std::size_t i = 0; i < n; ++i)
      inst.misspec.push_back(per_cluster[static_cast<std::size_t>(inst.assignment[i])]);
  }
  return inst;
}

inline ClusterInstance generate_cluster_instance(const InstanceOptions& o) {
  Rng rng(derive_seed(o.seed, 0x1257a));
  return generate_cluster_instance(o, rng);
}

/// Arrival sampler over a fixed probability vector (inverse CDF).
class ArrivalSampler {
public:
  explicit ArrivalSampler(std::span<const double> q) : cdf_(q.size()) {
    if (q.empty()) throw InvalidInput("empty arrival distribution");
    std::partial_sum(q.begin(), q.end(), cdf_.begin());
    last_positive_ = 0;
    for (std::size_t i = 0; i < q.size(); ++i)
      if (q[i] > 0) last_positive_ = i;
  }

  int operator()(Rng& rng) const {
    const double u = uniform01(rng) * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const auto i = static_cast<std::size_t>(it - cdf_.begin());
    return static_cast<int>(std::min(i, last_positive_));
  }

private:
  std::vector<double> cdf_;
  std::size_t last_positive_;
};

inline int sample_arrival(std::span<const double> q, Rng& rng) { return ArrivalSampler(q)(rng); }

/// Always consumes exactly d uniforms so that environment streams stay aligned
/// across covariate modes.
inline ContextVector sample_context(const CovariateMode& mode, int d, long t, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  Vector z(d);
  for (int k = 0; k < d; ++k) z[k] = uniform(rng, -s, s);
  if (mode.kind == CovariateMode::Kind::AlmostStatic) {
    const long block = (t - 1) / mode.period;
    z[mode.coordinate] = (block % 2 == 0) ? s : -s;
  }
  return ContextVector::from_raw(std::move(z));
}

/// Expected demand under the true model, unclamped. This is what revenue and
/// regret are computed from.
inline double expected_demand(const ClusterInstance& inst, int product, const ContextVector& ctx,
                              double price) {
  if (inst.misspecified()) return inst.misspec[static_cast<std::size_t>(product)].demand(ctx.z, price);
  const ThetaVector& th = inst.theta_of(product);
  return inst.link.mean(th.alpha.dot(ctx.x) + th.beta * price);
}

/// Probability fed to the Bernoulli draw. Linear-link values outside [0, 1] are
/// clamped and, when a counter is supplied, counted.
inline double purchase_probability(const ClusterInstance& inst, int product, const ContextVector& ctx,
                                   double price, std::size_t* clamp_count = nullptr) {
  const double raw = expected_demand(inst, product, ctx, price);
  if (raw < 0.0 || raw > 1.0) {
    if (clamp_count) ++*clamp_count;
    return std::clamp(raw, 0.0, 1.0);
  }
  return raw;
}

/// Always consumes exactly one uniform.
inline int sample_purchase(double probability, Rng& rng) { return uniform01(rng) < probability ? 1 : 0; }

} // namespace pricesim
