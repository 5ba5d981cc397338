#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "pricesim/demand_env.hpp"
#include "pricesim/instance_io.hpp"

using namespace pricesim;

TEST(Link, LogisticRangeAndDerivative) {
  for (double u = -30; u <= 30; u += 0.37) {
    const double mu = kLogisticLink.mean(u);
    EXPECT_GT(mu, 0.0);
    EXPECT_LT(mu, 1.0);
    const double dmu = kLogisticLink.derivative(u);
    EXPECT_NEAR(dmu, mu * (1 - mu), 1e-15);
    EXPECT_LE(dmu, 0.25);
    EXPECT_LT(kLogisticLink.mean(u), kLogisticLink.mean(u + 0.1));
  }
  EXPECT_DOUBLE_EQ(kLogisticLink.mean(0.0), 0.5);
  EXPECT_DOUBLE_EQ(kLogisticLink.cumulant(0.0), std::log(2.0));
}

TEST(Link, Linear) {
  EXPECT_DOUBLE_EQ(kLinearLink.mean(0.3), 0.3);
  EXPECT_DOUBLE_EQ(kLinearLink.derivative(7.0), 1.0);
  EXPECT_DOUBLE_EQ(kLinearLink.second_derivative(7.0), 0.0);
  EXPECT_DOUBLE_EQ(kLinearLink.cumulant(2.0), 2.0);
}

TEST(Link, ParseNames) {
  EXPECT_EQ(parse_link("logistic").kind, LinkKind::Logistic);
  EXPECT_EQ(parse_link("logit").kind, LinkKind::Logistic);
  EXPECT_EQ(parse_link("linear").kind, LinkKind::Linear);
  EXPECT_THROW(parse_link("probit"), ConfigError);
}

namespace {

void expect_instance_invariants(const ClusterInstance& inst) {
  ASSERT_EQ(inst.assignment.size(), static_cast<std::size_t>(inst.n));
  std::vector<int> sizes(static_cast<std::size_t>(inst.m), 0);
  for (int a : inst.assignment) {
    ASSERT_GE(a, 0);
    ASSERT_LT(a, inst.m);
    ++sizes[static_cast<std::size_t>(a)];
  }
  for (int s : sizes) EXPECT_GT(s, 0);
  double qsum = 0.0;
  for (double q : inst.q) {
    EXPECT_GT(q, 0.0);
    qsum += q;
  }
  EXPECT_NEAR(qsum, 1.0, 1e-12);
  for (int i = 0; i < inst.n; ++i) {
    const auto& th = inst.theta_of(i);
    EXPECT_LE(th.norm(), inst.theta_radius + 1e-12);
    EXPECT_LT(th.beta, 0.0);
    const auto& c = inst.centers[static_cast<std::size_t>(inst.cluster_of(i))];
    const double dist = (th.stacked() - c.stacked()).norm();
    if (inst.gamma0 == 0.0) EXPECT_EQ(dist, 0.0);
    else EXPECT_LE(dist, inst.gamma0 + 1e-12);
  }
  // Recorded separation equals the brute-force minimum center distance.
  double gamma = std::numeric_limits<double>::infinity();
  for (int a = 0; a < inst.m; ++a)
    for (int b = a + 1; b < inst.m; ++b)
      gamma = std::min(gamma, (inst.centers[static_cast<std::size_t>(a)].stacked() -
                               inst.centers[static_cast<std::size_t>(b)].stacked())
                                  .norm());
  EXPECT_EQ(inst.gamma, gamma);
}

} // namespace

TEST(GenerateInstance, LogisticTenClusters) {
  InstanceOptions o;
  o.seed = 3;
  const auto inst = generate_cluster_instance(o);
  EXPECT_EQ(inst.n, 100);
  EXPECT_EQ(inst.m, 10);
  expect_instance_invariants(inst);
  std::set<std::vector<double>> distinct;
  const double half = 10.0 / std::sqrt(7.0);
  for (const auto& c : inst.centers) {
    const Vector s = c.stacked();
    distinct.insert(std::vector<double>(s.data(), s.data() + s.size()));
    EXPECT_LE(c.norm(), 10.0);
    for (Eigen::Index k = 0; k < c.alpha.size(); ++k) EXPECT_LE(std::abs(c.alpha[k]), half);
    EXPECT_GE(c.beta, -half);
    EXPECT_LT(c.beta, 0.0);
  }
  EXPECT_EQ(distinct.size(), 10u);
}

TEST(GenerateInstance, SingleLinearProduct) {
  InstanceOptions o;
  o.n = 1;
  o.m = 1;
  o.d = 1;
  o.L = 1.0;
  o.link = kLinearLink;
  const auto inst = generate_cluster_instance(o);
  expect_instance_invariants(inst);
  const double beta = inst.theta_of(0).beta;
  EXPECT_GE(beta, -1.05 / std::sqrt(3.0));
  EXPECT_LT(beta, -0.05 / std::sqrt(3.0));
  EXPECT_TRUE(std::isinf(inst.gamma));
}

TEST(GenerateInstance, LinearRanges) {
  InstanceOptions o;
  o.link = kLinearLink;
  o.L = 1.0;
  o.seed = 11;
  const auto inst = generate_cluster_instance(o);
  expect_instance_invariants(inst);
  const double s = 1.0 / std::sqrt(7.0);
  for (const auto& c : inst.centers) {
    EXPECT_GE(c.alpha[0], s);
    EXPECT_LE(c.alpha[0], 2 * s);
    for (Eigen::Index k = 1; k < c.alpha.size(); ++k) {
      EXPECT_GE(c.alpha[k], 0.0);
      EXPECT_LE(c.alpha[k], s);
    }
    EXPECT_GE(c.beta, -1.05 * s);
    EXPECT_LE(c.beta, -0.05 * s);
  }
}

TEST(GenerateInstance, JitteredClustersReplay) {
  InstanceOptions o;
  o.n = 50;
  o.m = 5;
  o.d = 3;
  o.gamma0 = 0.5;
  o.seed = 99;
  const auto a = generate_cluster_instance(o);
  const auto b = generate_cluster_instance(o);
  expect_instance_invariants(a);
  for (int i = 0; i < a.n; ++i) EXPECT_EQ(a.theta_of(i).stacked(), b.theta_of(i).stacked());
  EXPECT_EQ(instance_to_json(a).dump(), instance_to_json(b).dump());
}

TEST(GenerateInstance, ManySeedsKeepInvariants) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    InstanceOptions o;
    o.n = 12;
    o.m = 6;
    o.d = 2;
    o.seed = seed;
    o.gamma0 = seed % 2 ? 0.3 : 0.0;
    o.link = seed % 3 ? kLogisticLink : kLinearLink;
    o.L = seed % 3 ? 10.0 : 1.0;
    expect_instance_invariants(generate_cluster_instance(o));
  }
}

TEST(GenerateInstance, RejectsMoreClustersThanProducts) {
  InstanceOptions o;
  o.n = 3;
  o.m = 4;
  try {
    generate_cluster_instance(o);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.path()).find("m"), std::string::npos);
  }
}

TEST(GenerateInstance, MinimumSeparationHonoured) {
  InstanceOptions o;
  o.n = 20;
  o.m = 4;
  o.min_separation = 4.0;
  o.seed = 5;
  const auto inst = generate_cluster_instance(o);
  EXPECT_GE(inst.gamma, 4.0);
}

TEST(InstanceJson, RoundTrip) {
  InstanceOptions o;
  o.misspec = true;
  o.gamma0 = 0.2;
  o.seed = 8;
  const auto inst = generate_cluster_instance(o);
  const auto j = instance_to_json(inst);
  const auto back = instance_from_json(j);
  EXPECT_EQ(instance_to_json(back).dump(), j.dump());
  ASSERT_TRUE(back.misspecified());
  EXPECT_EQ(back.misspec[3].b2, inst.misspec[3].b2);
}

TEST(Arrival, DegenerateDistribution) {
  Rng rng(1);
  const std::vector<double> q{1.0, 0.0, 0.0};
  for (int k = 0; k < 1000; ++k) EXPECT_EQ(sample_arrival(q, rng), 0);
}

TEST(Arrival, UniformFrequencies) {
  Rng rng(2);
  const std::vector<double> q(100, 0.01);
  const ArrivalSampler sampler(q);
  std::vector<int> counts(100, 0);
  const int draws = 1000000;
  for (int k = 0; k < draws; ++k) ++counts[static_cast<std::size_t>(sampler(rng))];
  const double sd = std::sqrt(draws * 0.01 * 0.99);
  for (int c : counts) EXPECT_LE(std::abs(c - draws * 0.01), 4 * sd);
}

TEST(Arrival, Replay) {
  const std::vector<double> q{0.5, 0.5};
  Rng a(77), b(77);
  for (int k = 0; k < 200; ++k) EXPECT_EQ(sample_arrival(q, a), sample_arrival(q, b));
}

TEST(Context, IidRange) {
  Rng rng(3);
  for (int k = 0; k < 1000; ++k) {
    const auto ctx = sample_context(CovariateMode::iid(), 4, k + 1, rng);
    ASSERT_EQ(ctx.x.size(), 5);
    EXPECT_EQ(ctx.x[0], 1.0);
    for (Eigen::Index j = 0; j < 4; ++j) {
      EXPECT_LE(std::abs(ctx.z[j]), 0.5);
      EXPECT_EQ(ctx.x[j + 1], ctx.z[j]);
    }
    EXPECT_LE(ctx.z.norm(), 1.0);
  }
}

TEST(Context, AlmostStaticSquareWave) {
  Rng rng(4);
  const auto mode = CovariateMode::almost_static(0, 100);
  const double s = 1.0 / std::sqrt(5.0);
  EXPECT_DOUBLE_EQ(sample_context(mode, 5, 50, rng).z[0], s);
  EXPECT_DOUBLE_EQ(sample_context(mode, 5, 100, rng).z[0], s);
  EXPECT_DOUBLE_EQ(sample_context(mode, 5, 101, rng).z[0], -s);
  EXPECT_DOUBLE_EQ(sample_context(mode, 5, 150, rng).z[0], -s);
  EXPECT_DOUBLE_EQ(sample_context(mode, 5, 201, rng).z[0], s);
  EXPECT_LE(sample_context(mode, 5, 7, rng).z.norm(), 1.0);
}

TEST(Context, IidMeanNearZero) {
  Rng rng(5);
  double sum = 0.0;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) sum += sample_context(CovariateMode::iid(), 1, k + 1, rng).z[0];
  EXPECT_LT(std::abs(sum / draws), 0.02);
}

namespace {

ClusterInstance one_product(LinkKind link, ThetaVector theta) {
  ClusterInstance inst;
  inst.n = 1;
  inst.m = 1;
  inst.d = static_cast<int>(theta.alpha.size()) - 1;
  inst.L = 10;
  inst.link = link == LinkKind::Linear ? kLinearLink : kLogisticLink;
  inst.price_bounds = {0, 10};
  inst.theta_radius = 10;
  inst.assignment = {0};
  inst.centers = {theta};
  inst.theta = {theta};
  inst.q = {1.0};
  return inst;
}

} // namespace

TEST(PurchaseProbability, LogisticAtZero) {
  const auto inst = one_product(LinkKind::Logistic, ThetaVector::zero(2));
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    const auto ctx = sample_context(CovariateMode::iid(), 2, 1, rng);
    EXPECT_DOUBLE_EQ(purchase_probability(inst, 0, ctx, uniform(rng, 0, 10)), 0.5);
  }
}

TEST(PurchaseProbability, LinearArithmetic) {
  ThetaVector th{Vector::Zero(2), -0.05};
  th.alpha << 0.6, 0.0;
  const auto inst = one_product(LinkKind::Linear, th);
  const auto ctx = ContextVector::from_raw(Vector::Zero(1));
  EXPECT_NEAR(purchase_probability(inst, 0, ctx, 4.0), 0.4, 1e-15);
}

TEST(PurchaseProbability, LinearClampCounted) {
  ThetaVector th{Vector::Zero(2), -0.05};
  th.alpha << 1.5, 0.0;
  const auto inst = one_product(LinkKind::Linear, th);
  const auto ctx = ContextVector::from_raw(Vector::Zero(1));
  std::size_t clamps = 0;
  EXPECT_EQ(purchase_probability(inst, 0, ctx, 1.0, &clamps), 1.0);
  EXPECT_EQ(clamps, 1u);
  EXPECT_NEAR(expected_demand(inst, 0, ctx, 1.0), 1.45, 1e-15);
}

TEST(PurchaseProbability, MisspecZeroCoefficients) {
  auto inst = one_product(LinkKind::Logistic, ThetaVector::zero(3));
  MisspecCoefficients mc;
  mc.c1 = mc.c2 = mc.c3 = Vector::Zero(3);
  inst.misspec = {mc};
  Rng rng(7);
  const auto ctx = sample_context(CovariateMode::iid(), 3, 1, rng);
  EXPECT_DOUBLE_EQ(purchase_probability(inst, 0, ctx, 3.3), 0.5);
}

TEST(PurchaseProbability, MisspecUsesSquaredQuadraticTerm) {
  MisspecCoefficients mc;
  mc.c1 = mc.c2 = mc.c3 = Vector::Zero(1);
  mc.b2 = -0.5;
  const Vector z = Vector::Zero(1);
  // f = 0.25 p^2 at p = 2 gives 1, demand 1 / (1 + e).
  EXPECT_NEAR(mc.demand(z, 2.0), 1.0 / (1.0 + std::exp(1.0)), 1e-15);
}

TEST(PurchaseProbability, DecreasingInPrice) {
  InstanceOptions o;
  o.seed = 12;
  const auto inst = generate_cluster_instance(o);
  Rng rng(8);
  for (int k = 0; k < 2000; ++k) {
    const int i = static_cast<int>(uniform_index(rng, 100));
    const auto ctx = sample_context(CovariateMode::iid(), 5, 1, rng);
    double p1 = uniform(rng, 0, 10), p2 = uniform(rng, 0, 10);
    if (p1 > p2) std::swap(p1, p2);
    EXPECT_GE(purchase_probability(inst, i, ctx, p1), purchase_probability(inst, i, ctx, p2));
  }
}

TEST(SamplePurchase, Extremes) {
  Rng rng(9);
  for (int k = 0; k < 1000; ++k) {
    EXPECT_EQ(sample_purchase(0.0, rng), 0);
    EXPECT_EQ(sample_purchase(1.0, rng), 1);
  }
}

TEST(SamplePurchase, Frequency) {
  Rng rng(10);
  int hits = 0;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) hits += sample_purchase(0.3, rng);
  EXPECT_NEAR(static_cast<double>(hits) / draws, 0.3, 0.01);
}

TEST(Random, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(1, 1), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 1, 0), derive_seed(1, 1, 1));
  EXPECT_EQ(derive_seed(5, 9, 3), derive_seed(5, 9, 3));
  Rng rng(11);
  for (int k = 0; k < 10000; ++k) {
    const double u = uniform01(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}
