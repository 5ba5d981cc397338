#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pricesim/harness.hpp"
#include "pricesim/policy.hpp"
#include "pricesim/pricing.hpp"

using namespace pricesim;

TEST(PriceOptimize, Examples) {
  const PriceBounds b{0, 10};
  EXPECT_NEAR(price_optimize(kLinearLink, 1.0, -0.25, b), 2.0, 1e-15);
  EXPECT_NEAR(price_optimize(kLogisticLink, 0.0, -1.0, b), 1.27846, 1e-5);
  EXPECT_NEAR(price_optimize(kLinearLink, 1.0, -0.25, PriceBounds{3, 10}), 3.0, 1e-15);
  // Flat or increasing revenue pushes to the top of the range.
  EXPECT_EQ(price_optimize(kLogisticLink, 0.0, 0.0, b), 10.0);
  EXPECT_EQ(price_optimize(kLinearLink, 0.5, 0.0, b), 10.0);
}

TEST(PriceOptimize, LogisticRootCondition) {
  // At the interior optimum p * sigma(p) = 1 for ax = 0, beta = -1.
  const double p = price_optimize(kLogisticLink, 0.0, -1.0, PriceBounds{0, 10});
  EXPECT_NEAR(p * oracle::sigmoid(p), 1.0, 1e-7);
}

TEST(PriceOptimize, MatchesBruteForceGrid) {
  Rng rng(501);
  const PriceBounds b{0, 10};
  for (int k = 0; k < 100; ++k) {
    const double ax = uniform(rng, -5, 5);
    const double beta = uniform(rng, -3, -0.05);
    const auto ref = oracle::grid_argmax([&](double p) { return p * oracle::sigmoid(ax + beta * p); }, 0, 10, 1000000);
    EXPECT_NEAR(price_optimize(kLogisticLink, ax, beta, b), ref.x, 1e-6) << "ax=" << ax << " beta=" << beta;
  }
}

TEST(PriceOptimize, LinearClosedForm) {
  Rng rng(502);
  const PriceBounds b{0, 10};
  for (int k = 0; k < 1000; ++k) {
    const double ax = uniform(rng, -1, 3);
    const double beta = uniform(rng, -2, -0.01);
    EXPECT_NEAR(price_optimize(kLinearLink, ax, beta, b), std::clamp(-ax / (2 * beta), 0.0, 10.0), 1e-12);
  }
}

TEST(Perturbation, Magnitude) {
  EXPECT_DOUBLE_EQ(perturbation_magnitude(1.0, 16, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(perturbation_magnitude(1.0, 16, 0.6), 0.6);
  double prev = perturbation_magnitude(1.0, 1, 0.0);
  for (int n = 2; n < 5000; ++n) {
    const double m = perturbation_magnitude(1.0, n, 0.0);
    EXPECT_LE(m, prev);
    prev = m;
  }
}

TEST(Perturbation, FairSign) {
  Rng rng(503);
  double sum = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double d = perturbation(1.0, 16, 0.0, rng);
    EXPECT_DOUBLE_EQ(std::abs(d), 0.5);
    sum += d > 0 ? 1 : -1;
  }
  EXPECT_LT(std::abs(sum / 10000), 0.05);
}

TEST(ProjectPrice, Examples) {
  EXPECT_DOUBLE_EQ(project_price(12, 0.5, PriceBounds{0, 10}), 9.5);
  EXPECT_DOUBLE_EQ(project_price(5, 0.5, PriceBounds{0, 10}), 5);
  EXPECT_DOUBLE_EQ(project_price(0.2, 0.6, PriceBounds{0, 1}), 0.5);
}

namespace {

ClusterInstance small_instance(int n, int m, std::uint64_t seed, int d = 3) {
  InstanceOptions o;
  o.n = n;
  o.m = m;
  o.d = d;
  o.seed = seed;
  return generate_cluster_instance(o);
}

PolicyConfig kind_config(PolicyKind kind) {
  PolicyConfig p;
  p.kind = kind;
  p.name = std::string(to_string(kind));
  return p;
}

// Feeds both policies the same customers and outcomes and checks they post the
// same prices. Each policy gets its own copy of the policy stream.
void expect_same_prices(const ClusterInstance& inst, PricingPolicy& a, PricingPolicy& b, long T,
                        std::uint64_t seed) {
  Rng env(seed), pa(seed + 1), pb(seed + 1);
  const ArrivalSampler arrivals(inst.q);
  for (long t = 1; t <= T; ++t) {
    const int i = arrivals(env);
    const auto ctx = sample_context(CovariateMode::iid(), inst.d, t, env);
    const auto da = a.price(i, ctx, t, pa);
    const auto db = b.price(i, ctx, t, pb);
    ASSERT_EQ(da.price, db.price) << "period " << t;
    ASSERT_EQ(da.delta, db.delta);
    const int y = sample_purchase(purchase_probability(inst, i, ctx, da.price), env);
    const SalesRecord r{t, i, ctx.design(da.price), da.delta, y};
    a.update(r);
    b.update(r);
  }
}

} // namespace

TEST(Policy, SingleProductPoliciesCoincide) {
  const auto inst = small_instance(1, 1, 7);
  RunOptions run;
  run.T = 400;
  auto one = run_replication(inst, kind_config(PolicyKind::SMP_ONE), run, 99);
  auto csmp = run_replication(inst, kind_config(PolicyKind::CSMP), run, 99);
  one.policy = csmp.policy;
  EXPECT_EQ(one, csmp);
}

TEST(Policy, ColdStart) {
  const auto inst = small_instance(4, 2, 8);
  PricingPolicy pol(kind_config(PolicyKind::CSMP), inst);
  Rng rng(1);
  const auto ctx = sample_context(CovariateMode::iid(), inst.d, 1, rng);
  const auto dec = pol.price(2, ctx, 1, rng);
  EXPECT_EQ(dec.neighborhood.size(), 4u);
  EXPECT_EQ(dec.theta_tilde, Vector::Zero(inst.d + 2));
  EXPECT_EQ(dec.raw_price, price_optimize(kLogisticLink, 0.0, 0.0, inst.price_bounds));
  EXPECT_EQ(dec.pooled_count, 0u);
  // |Delta| = delta0 * 1^{-1/4}.
  EXPECT_DOUBLE_EQ(std::abs(dec.delta), 1.0);
}

TEST(Policy, LinearColdStartUsesIntervalMidpoint) {
  InstanceOptions o;
  o.n = 3;
  o.m = 1;
  o.link = kLinearLink;
  o.L = 1.0;
  const auto inst = generate_cluster_instance(o);
  PricingPolicy pol(PolicyConfig::csmp_l_collapsed("CSMP-L", 0.04), inst);
  Rng rng(2);
  const auto ctx = sample_context(CovariateMode::iid(), inst.d, 1, rng);
  const auto dec = pol.price(0, ctx, 1, rng);
  EXPECT_EQ(dec.neighborhood.size(), 3u);
  EXPECT_DOUBLE_EQ(dec.theta_tilde[inst.d + 1], (Interval{-1.0, -0.01}.midpoint()));
}

TEST(Policy, PricesStayInBounds) {
  const auto inst = small_instance(2, 1, 9, 5);
  RunOptions run;
  run.T = 5000;
  const auto tr = run_replication(inst, kind_config(PolicyKind::CSMP), run, 5);
  for (const auto& r : tr.rows) {
    ASSERT_GE(r.price, 0.0);
    ASSERT_LE(r.price, 10.0);
  }
}

TEST(Policy, AllKindsStayInBounds) {
  const auto inst = small_instance(12, 3, 10);
  RunOptions run;
  run.T = 600;
  for (auto kind : {PolicyKind::CSMP, PolicyKind::SMP_IND, PolicyKind::SMP_ONE, PolicyKind::CSMP_KMEANS}) {
    PolicyConfig p = kind_config(kind);
    p.K = 3;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto tr = run_replication(inst, p, run, seed);
      for (const auto& r : tr.rows) {
        ASSERT_GE(r.price, 0.0);
        ASSERT_LE(r.price, 10.0);
        ASSERT_GE(r.inst_regret, -1e-9);
      }
    }
  }
}

TEST(Policy, TinyPriceRangeCollapsesToMidpoint) {
  InstanceOptions o;
  o.n = 2;
  o.m = 1;
  o.d = 2;
  o.price_bounds = {0, 1};
  const auto inst = generate_cluster_instance(o);
  PolicyConfig p = kind_config(PolicyKind::CSMP);
  EXPECT_FALSE(validate(p, inst.price_bounds).empty());
  RunOptions run;
  run.T = 50;
  const auto tr = run_replication(inst, p, run, 3);
  for (const auto& r : tr.rows) {
    ASSERT_GE(r.price, 0.0);
    ASSERT_LE(r.price, 1.0);
  }
}

TEST(Policy, SeparatedEstimatesGiveTrueClusters) {
  const auto inst = small_instance(20, 4, 11);
  PricingPolicy pol(kind_config(PolicyKind::CSMP), inst);
  std::vector<Vector> est;
  for (int i = 0; i < inst.n; ++i) est.push_back(inst.theta_of(i).stacked());
  pol.override_individual_estimates(est, std::vector<double>(static_cast<std::size_t>(inst.n), inst.gamma / 5));
  Rng env(4), prng(5);
  const ArrivalSampler arrivals(inst.q);
  for (long t = 1; t <= 200; ++t) {
    const int i = arrivals(env);
    const auto ctx = sample_context(CovariateMode::iid(), inst.d, t, env);
    const auto dec = pol.price(i, ctx, t, prng);
    const auto truth = inst.cluster_members(inst.cluster_of(i));
    ASSERT_EQ(dec.neighborhood.members, truth);
    std::size_t pooled = 0;
    for (int j : truth) pooled += pol.history(j).count();
    ASSERT_EQ(dec.pooled_count, pooled);
    pol.update(SalesRecord{t, i, ctx.design(dec.price), dec.delta, sample_purchase(0.5, env)});
  }
}

TEST(Policy, CollapsedCsmpMatchesIndividualPricing) {
  const auto inst = small_instance(6, 2, 12);
  PricingPolicy ind(kind_config(PolicyKind::SMP_IND), inst);
  PricingPolicy csmp(kind_config(PolicyKind::CSMP), inst);
  std::vector<Vector> far;
  for (int i = 0; i < inst.n; ++i) far.push_back(Vector::Constant(inst.d + 2, 1e6 * (i + 1)));
  csmp.override_individual_estimates(far, std::vector<double>(static_cast<std::size_t>(inst.n), 0.0));
  expect_same_prices(inst, ind, csmp, 800, 21);
}

TEST(Policy, UpdateBookkeeping) {
  const auto inst = small_instance(3, 1, 13);
  PricingPolicy pol(kind_config(PolicyKind::CSMP), inst);
  Rng rng(6);
  Matrix V = Matrix::Identity(inst.d + 2, inst.d + 2);
  for (long t = 1; t <= 50; ++t) {
    const auto ctx = sample_context(CovariateMode::iid(), inst.d, t, rng);
    const SalesRecord r{t, 1, ctx.design(uniform(rng, 0, 10)), 0.1, static_cast<int>(t % 2)};
    const std::size_t before = pol.history(1).count();
    pol.update(r);
    V += r.u * r.u.transpose();
    EXPECT_EQ(pol.history(1).count(), before + 1);
    EXPECT_TRUE(pol.dirty(1));
    EXPECT_LE((pol.history(1).V() - V).norm(), 1e-10 * V.norm());
  }
  EXPECT_EQ(pol.history(0).count(), 0u);
  SalesRecord bad{1, 7, Vector::Zero(inst.d + 2), 0.0, 0};
  EXPECT_THROW(pol.update(bad), InvalidInput);
}

TEST(Policy, UpdatesCommuteAcrossProducts) {
  const auto inst = small_instance(3, 1, 14);
  Rng rng(7);
  std::vector<SalesRecord> events;
  for (long t = 1; t <= 60; ++t) {
    const auto ctx = sample_context(CovariateMode::iid(), inst.d, t, rng);
    events.push_back(SalesRecord{t, static_cast<int>(t % 2), ctx.design(uniform(rng, 0, 10)),
                                 uniform(rng, -1, 1), coin_flip(rng) ? 1 : 0});
  }
  // Interleaved order versus all of product 0 first; per-product order kept.
  std::vector<SalesRecord> grouped;
  for (int p : {1, 0})
    for (const auto& e : events)
      if (e.product == p) grouped.push_back(e);

  PricingPolicy a(kind_config(PolicyKind::CSMP), inst);
  PricingPolicy b(kind_config(PolicyKind::CSMP), inst);
  for (const auto& e : events) a.update(e);
  for (const auto& e : grouped) b.update(e);
  for (int i = 0; i < inst.n; ++i) {
    EXPECT_EQ(a.history(i).V(), b.history(i).V());
    EXPECT_EQ(a.history(i).sum_delta_sq(), b.history(i).sum_delta_sq());
    EXPECT_EQ(a.individual_estimate(i), b.individual_estimate(i));
    EXPECT_EQ(a.individual_bound(i, 61), b.individual_bound(i, 61));
  }
}

TEST(Policy, CacheMatchesRecomputation) {
  const auto inst = small_instance(8, 2, 15);
  for (auto kind : {PolicyKind::CSMP, PolicyKind::CSMP_KMEANS}) {
    PolicyConfig p = kind_config(kind);
    p.K = 2;
    PricingPolicy pol(p, inst);
    Rng env(8), prng(9);
    const ArrivalSampler arrivals(inst.q);
    for (long t = 1; t <= 300; ++t) {
      const int i = arrivals(env);
      const auto ctx = sample_context(CovariateMode::iid(), inst.d, t, env);
      const auto dec = pol.price(i, ctx, t, prng);
      pol.update(SalesRecord{t, i, ctx.design(dec.price), dec.delta,
                             sample_purchase(purchase_probability(inst, i, ctx, dec.price), env)});
      if (t % 50 != 0) continue;
      for (int j = 0; j < inst.n; ++j) {
        if (!pol.dirty(j)) {
          EXPECT_EQ(pol.cached_estimate(j), pol.recompute_individual(j));
          EXPECT_EQ(pol.cached_lambda_min(j), min_eigenvalue(pol.history(j).V()));
        }
        EXPECT_EQ(pol.individual_estimate(j), pol.recompute_individual(j));
        EXPECT_FALSE(pol.dirty(j));
      }
    }
  }
}

TEST(Policy, PooledEstimateMatchesColdFit) {
  // The incremental pooled cache must not change the fitted value beyond the
  // solver tolerance.
  const auto inst = small_instance(5, 1, 16);
  PolicyConfig p = kind_config(PolicyKind::SMP_ONE);
  p.mle_tolerance_per_record = false;
  PricingPolicy pol(p, inst);
  Rng env(10), prng(11);
  const ArrivalSampler arrivals(inst.q);
  for (long t = 1; t <= 400; ++t) {
    const int i = arrivals(env);
    const auto ctx = sample_context(CovariateMode::iid(), inst.d, t, env);
    const auto dec = pol.price(i, ctx, t, prng);
    if (t % 100 == 0) {
      std::vector<RecordBlock> blocks;
      for (int j = 0; j < inst.n; ++j) blocks.push_back(pol.history(j).block());
      const auto cold = glm_mle(blocks, inst.d + 2, kLogisticLink, inst.theta_radius);
      EXPECT_LE((cold.theta - dec.theta_tilde).norm(), 1e-5);
    }
    pol.update(SalesRecord{t, i, ctx.design(dec.price), dec.delta,
                           sample_purchase(purchase_probability(inst, i, ctx, dec.price), env)});
  }
}

TEST(Policy, ValidateRejectsBadConfig) {
  PolicyConfig p;
  p.delta0 = 0;
  EXPECT_THROW(validate(p, PriceBounds{0, 10}), ConfigError);
  p = PolicyConfig{};
  p.upsilon = -1;
  EXPECT_THROW(validate(p, PriceBounds{0, 10}), ConfigError);
  p = PolicyConfig{};
  p.beta_interval = Interval{-0.1, -1.0};
  EXPECT_THROW(validate(p, PriceBounds{0, 10}), ConfigError);
  EXPECT_TRUE(validate(PolicyConfig{}, PriceBounds{0, 10}).empty());
  EXPECT_THROW(PricingPolicy(kind_config(PolicyKind::Oracle), small_instance(2, 1, 1)), ConfigError);
}
