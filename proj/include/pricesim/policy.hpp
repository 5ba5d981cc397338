#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pricesim/clustering.hpp"
#include "pricesim/demand_env.hpp"
#include "pricesim/errors.hpp"
#include "pricesim/estimation.hpp"
#include "pricesim/pricing.hpp"
#include "pricesim/random.hpp"

namespace pricesim {

enum class PolicyKind { CSMP, CSMP_L, SMP_IND, SMP_ONE, CSMP_KMEANS, Oracle };

inline std::string_view to_string(PolicyKind k) {
  switch (k) {
  case PolicyKind::CSMP: return "CSMP";
  case PolicyKind::CSMP_L: return "CSMP-L";
  case PolicyKind::SMP_IND: return "SMP-IND";
  case PolicyKind::SMP_ONE: return "SMP-ONE";
  case PolicyKind::CSMP_KMEANS: return "CSMP-KMeans";
  case PolicyKind::Oracle: return "Oracle";
  }
  return "?";
}

inline PolicyKind parse_policy_kind(std::string_view s) {
  for (auto k : {PolicyKind::CSMP, PolicyKind::CSMP_L, PolicyKind::SMP_IND, PolicyKind::SMP_ONE,
                 PolicyKind::CSMP_KMEANS, PolicyKind::Oracle})
    if (s == to_string(k)) return k;
  throw ConfigError("kind", "unknown policy kind '" + std::string(s) + "'");
}

struct PolicyConfig {
  std::string name = "CSMP";
  PolicyKind kind = PolicyKind::CSMP;
  /// GLM confidence-bound constant.
  double c = 0.8;
  /// Linear-model bound constants.
  double c1 = 1.0;
  double c2 = 1.0;
  double delta0 = 1.0;
  /// Neighborhood slack for relaxed clusters.
  double gamma0 = 0.0;
  /// Perturbation floor for relaxed clusters.
  double upsilon = 0.0;
  int K = 10;
  int kmeans_restarts = 3;
  int kmeans_max_iter = 100;
  int recluster_every = 1;
  double ridge_lambda = 1.0;
  /// Admissible price-sensitivity interval for CSMP-L; [-L, -0.01] when unset.
  std::optional<Interval> beta_interval;
  /// Estimation ball radius; the instance's parameter radius when unset.
  std::optional<double> theta_radius;
  double mle_tolerance = 1e-8;
  /// Scale the tolerance by the pooled record count (keeps long runs tractable).
  bool mle_tolerance_per_record = true;

  /// The linear-model bound
  ///   C^2 = c (log t / S + 0.05 (d+1) log^2 t T / (lambda_min S))
  /// is the general form with c1 = sqrt(c), c2 = sqrt(0.05 c).
  static PolicyConfig csmp_l_collapsed(std::string name, double c) {
    PolicyConfig p;
    p.name = std::move(name);
    p.kind = PolicyKind::CSMP_L;
    p.c = c;
    p.c1 = std::sqrt(c);
    p.c2 = std::sqrt(0.05 * c);
    return p;
  }

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

/// Returns human-readable warnings; throws ConfigError on hard violations.
inline std::vector<std::string> validate(const PolicyConfig& p, const PriceBounds& bounds) {
  std::vector<std::string> warnings;
  if (!(p.delta0 > 0)) throw ConfigError("delta0", "must be positive");
  if (!(p.upsilon >= 0)) throw ConfigError("upsilon", "must be nonnegative");
  if (!(p.gamma0 >= 0)) throw ConfigError("gamma0", "must be nonnegative");
  if (!(p.c > 0)) throw ConfigError("c", "must be positive");
  if (p.kind == PolicyKind::CSMP_L && !(p.c1 > 0 && p.c2 > 0)) throw ConfigError("c1", "c1 and c2 must be positive");
  if (p.kind == PolicyKind::CSMP_KMEANS) {
    if (p.K < 1) throw ConfigError("K", "must be at least 1");
    if (p.kmeans_restarts < 1) throw ConfigError("kmeans_restarts", "must be at least 1");
    if (p.recluster_every < 1) throw ConfigError("recluster_every", "must be at least 1");
  }
  if (p.beta_interval && !(p.beta_interval->lower <= p.beta_interval->upper))
    throw ConfigError("beta_interval", "empty interval");
  if (!(bounds.lower < bounds.upper)) throw ConfigError("price_bounds", "need lower < upper");
  if (bounds.lower + p.delta0 > bounds.upper - p.delta0)
    warnings.push_back("delta0 too large for the price range: lower + delta0 > upper - delta0");
  return warnings;
}

struct PriceDecision {
  double price = 0.0;      // posted: projected + delta
  double raw_price = 0.0;  // argmax under the pooled estimate
  double base_price = 0.0; // after projection
  double delta = 0.0;
  std::size_t pooled_count = 0;
  Neighborhood neighborhood;
  Vector theta_tilde;
};

/// Mutable state of one pricing policy within one replication: per-product
/// histories, the cached individual estimates and their confidence radii.
class PricingPolicy {
public:
  PricingPolicy(PolicyConfig config, int n, int d, LinkFunction link, PriceBounds bounds, double theta_radius,
                double L)
      : cfg_(std::move(config)), n_(n), d_(d), link_(cfg_.kind == PolicyKind::CSMP_L ? kLinearLink : link),
        bounds_(bounds), radius_(cfg_.theta_radius.value_or(theta_radius)),
        beta_interval_(cfg_.beta_interval.value_or(Interval{-L, -0.01})) {
    if (cfg_.kind == PolicyKind::Oracle) throw ConfigError("kind", "the oracle policy is run by the harness");
    validate(cfg_, bounds_);
    histories_.assign(static_cast<std::size_t>(n_), ProductHistory(d_));
    estimates_.assign(static_cast<std::size_t>(n_), Vector::Zero(d_ + 2));
    if (cfg_.kind == PolicyKind::CSMP_L)
      for (auto& e : estimates_) e[d_ + 1] = beta_interval_.midpoint();
    lambda_min_.assign(static_cast<std::size_t>(n_), 1.0);
    dirty_.assign(static_cast<std::size_t>(n_), false);
    pooled_.assign(static_cast<std::size_t>(n_), PooledCache{{}, {}, Vector::Zero(d_ + 2), {}, false});
  }

  PricingPolicy(PolicyConfig config, const ClusterInstance& inst)
      : PricingPolicy(std::move(config), inst.n, inst.d, inst.link, inst.price_bounds, inst.theta_radius, inst.L) {}

  const PolicyConfig& config() const { return cfg_; }
  const ProductHistory& history(int i) const { return histories_[static_cast<std::size_t>(i)]; }
  int products() const { return n_; }

  /// Replaces the individual estimates and radii with fixed values; they are
  /// no longer refreshed from data.
  void override_individual_estimates(std::vector<Vector> estimates, std::vector<double> bounds) {
    if (estimates.size() != static_cast<std::size_t>(n_) || bounds.size() != estimates.size())
      throw InvalidInput("override needs one estimate and bound per product");
    estimates_ = std::move(estimates);
    override_bounds_ = std::move(bounds);
  }

  /// Step (a): individual estimate of product i from its own data.
  const Vector& individual_estimate(int i) {
    refresh(i);
    return estimates_[static_cast<std::size_t>(i)];
  }

  /// Confidence radius of product i entering period t (uses t - 1 data).
  double individual_bound(int i, long t) {
    if (override_bounds_) return (*override_bounds_)[static_cast<std::size_t>(i)];
    refresh(i);
    const auto& h = histories_[static_cast<std::size_t>(i)];
    const double lm = lambda_min_[static_cast<std::size_t>(i)];
    const double tp = static_cast<double>(t - 1);
    if (cfg_.kind == PolicyKind::CSMP_L)
      return confidence_bound_linear_from_eigen(h.sum_delta_sq(), h.count(), lm, d_, tp, cfg_.c1, cfg_.c2);
    return confidence_bound_glm_from_eigen(lm, tp, cfg_.c, d_);
  }

  /// Step (b).
  Neighborhood neighborhood(int product, long t, Rng& rng) {
    switch (cfg_.kind) {
    case PolicyKind::SMP_IND: return {product, {product}};
    case PolicyKind::SMP_ONE: {
      Neighborhood nb{product, std::vector<int>(static_cast<std::size_t>(n_))};
      for (int i = 0; i < n_; ++i) nb.members[static_cast<std::size_t>(i)] = i;
      return nb;
    }
    case PolicyKind::CSMP_KMEANS: {
      if (clustered_at_ < 0 || (t - 1) % cfg_.recluster_every == 0) recluster(t, rng);
      Neighborhood nb{product, {}};
      const int mine = kmeans_assignment_[static_cast<std::size_t>(product)];
      for (int i = 0; i < n_; ++i)
        if (kmeans_assignment_[static_cast<std::size_t>(i)] == mine) nb.members.push_back(i);
      return nb;
    }
    default: {
      std::vector<double> bounds(static_cast<std::size_t>(n_));
      for (int i = 0; i < n_; ++i) {
        refresh(i);
        bounds[static_cast<std::size_t>(i)] = individual_bound(i, t);
      }
      return build_neighborhood(product, estimates_, bounds, cfg_.gamma0);
    }
    }
  }

  /// Step (c): clustered estimate from the pooled records of the neighborhood.
  Vector pooled_estimate(int product, const Neighborhood& nb, std::size_t* pooled_count = nullptr) {
    std::size_t count = 0;
    for (int j : nb.members) count += histories_[static_cast<std::size_t>(j)].count();
    if (pooled_count) *pooled_count = count;

    if (cfg_.kind == PolicyKind::CSMP_L) {
      double sdd = 0.0, sdsq = 0.0;
      Matrix xtx = Matrix::Zero(d_ + 1, d_ + 1);
      Vector sxd = Vector::Zero(d_ + 1), sxp = Vector::Zero(d_ + 1);
      for (int j : nb.members) {
        const auto& h = histories_[static_cast<std::size_t>(j)];
        sdd += h.sum_delta_d();
        sdsq += h.sum_delta_sq();
        xtx += h.Vbar();
        xtx.diagonal().array() -= 1.0;
        sxd += h.sum_x_d();
        sxp += h.sum_x_p();
      }
      Vector theta(d_ + 2);
      theta[d_ + 1] = beta_hat_linear(sdd, sdsq, beta_interval_);
      theta.head(d_ + 1) = alpha_hat_ridge(xtx, sxd, sxp, theta[d_ + 1], cfg_.ridge_lambda);
      return theta;
    }

    std::vector<RecordBlock> blocks;
    blocks.reserve(nb.members.size());
    for (int j : nb.members) blocks.push_back(histories_[static_cast<std::size_t>(j)].block());

    // Every product shares one neighborhood under SMP-ONE, so one slot serves all.
    PooledCache& cache = pooled_[cfg_.kind == PolicyKind::SMP_ONE ? 0 : static_cast<std::size_t>(product)];
    MleOptions opt = mle_options();
    opt.warm_start = &cache.theta;
    GlmEvaluation warm_eval;
    if (cache.valid && cache.members == nb.members && cache.evaluation.hessian.rows() == d_ + 2) {
      // Same pooled set plus newly appended records: extend the cached
      // evaluation instead of re-reading everything.
      std::vector<RecordBlock> fresh;
      for (std::size_t k = 0; k < nb.members.size(); ++k) {
        const auto& h = histories_[static_cast<std::size_t>(nb.members[k])];
        if (h.count() > cache.counts[k]) fresh.push_back(h.block(cache.counts[k]));
      }
      warm_eval = cache.evaluation;
      if (!fresh.empty()) {
        GlmEvaluation extra;
        detail::evaluate_glm(fresh, link_, cache.theta, extra, true);
        warm_eval += extra;
      }
      opt.warm_evaluation = &warm_eval;
    }
    MleResult res = glm_mle(blocks, d_ + 2, link_, radius_, opt);
    cache.valid = true;
    cache.members = nb.members;
    cache.counts.resize(nb.members.size());
    for (std::size_t k = 0; k < nb.members.size(); ++k)
      cache.counts[k] = histories_[static_cast<std::size_t>(nb.members[k])].count();
    cache.theta = std::move(res.theta);
    cache.evaluation = std::move(res.evaluation);
    return cache.theta;
  }

  /// Full pricing pipeline for `product` in period t.
  PriceDecision price(int product, const ContextVector& ctx, long t, Rng& rng) {
    PriceDecision out;
    out.neighborhood = neighborhood(product, t, rng);
    out.theta_tilde = pooled_estimate(product, out.neighborhood, &out.pooled_count);
    const double ax = out.theta_tilde.head(d_ + 1).dot(ctx.x);
    out.raw_price = price_optimize(link_, ax, out.theta_tilde[d_ + 1], bounds_);

    // The current arrival counts toward the pooled total.
    double delta = perturbation(cfg_.delta0, static_cast<double>(out.pooled_count + 1), cfg_.upsilon, rng);
    const double half_width = 0.5 * bounds_.width();
    if (std::abs(delta) > half_width) delta = std::copysign(half_width, delta);
    out.delta = delta;
    out.base_price = project_price(out.raw_price, std::abs(delta), bounds_);
    out.price = std::clamp(out.base_price + delta, bounds_.lower, bounds_.upper);
    return out;
  }

  /// Appends the sale to its product's history and invalidates that product's
  /// cached estimate.
  void update(const SalesRecord& record) {
    if (record.product < 0 || record.product >= n_) throw InvalidInput("record product out of range");
    histories_[static_cast<std::size_t>(record.product)].append(record);
    dirty_[static_cast<std::size_t>(record.product)] = true;
  }

  bool dirty(int i) const { return dirty_[static_cast<std::size_t>(i)]; }
  const Vector& cached_estimate(int i) const { return estimates_[static_cast<std::size_t>(i)]; }
  double cached_lambda_min(int i) const { return lambda_min_[static_cast<std::size_t>(i)]; }

  /// Individual estimate recomputed from the history alone, bypassing the cache.
  Vector recompute_individual(int i) const {
    const auto& h = histories_[static_cast<std::size_t>(i)];
    if (cfg_.kind == PolicyKind::CSMP_L) {
      Vector theta(d_ + 2);
      theta[d_ + 1] = beta_hat_linear(h.sum_delta_d(), h.sum_delta_sq(), beta_interval_);
      Matrix xtx = h.Vbar();
      xtx.diagonal().array() -= 1.0;
      theta.head(d_ + 1) = alpha_hat_ridge(xtx, h.sum_x_d(), h.sum_x_p(), theta[d_ + 1], cfg_.ridge_lambda);
      return theta;
    }
    return glm_mle(h.block(), d_ + 2, link_, radius_, mle_options()).theta;
  }

private:
  MleOptions mle_options() const {
    MleOptions opt;
    opt.gradient_tolerance = cfg_.mle_tolerance;
    opt.tolerance_per_record = cfg_.mle_tolerance_per_record;
    return opt;
  }

  bool needs_individual_estimates() const {
    return cfg_.kind == PolicyKind::CSMP || cfg_.kind == PolicyKind::CSMP_L || cfg_.kind == PolicyKind::CSMP_KMEANS;
  }

  void refresh(int i) {
    const auto k = static_cast<std::size_t>(i);
    if (!dirty_[k] || override_bounds_ || !needs_individual_estimates()) return;
    estimates_[k] = recompute_individual(i);
    const auto& h = histories_[k];
    lambda_min_[k] = min_eigenvalue(cfg_.kind == PolicyKind::CSMP_L ? h.Vbar() : h.V());
    dirty_[k] = false;
  }

  void recluster(long t, Rng& rng) {
    for (int i = 0; i < n_; ++i) refresh(i);
    const int K = std::min(cfg_.K, n_);
    kmeans_assignment_ = kmeans(estimates_, K, cfg_.kmeans_restarts, cfg_.kmeans_max_iter, rng).assignment;
    clustered_at_ = t;
  }

  PolicyConfig cfg_;
  int n_;
  int d_;
  LinkFunction link_;
  PriceBounds bounds_;
  double radius_;
  Interval beta_interval_;
  std::vector<ProductHistory> histories_;
  std::vector<Vector> estimates_;
  std::vector<double> lambda_min_;
  std::vector<bool> dirty_;
  // Last pooled fit per product, reused as the next warm start.
  struct PooledCache {
    std::vector<int> members;
    std::vector<std::size_t> counts;
    Vector theta;
    GlmEvaluation evaluation;
    bool valid = false;
  };
  std::vector<PooledCache> pooled_;
  std::optional<std::vector<double>> override_bounds_;
  std::vector<int> kmeans_assignment_;
  long clustered_at_ = -1;
};

} // namespace pricesim
