#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "pricesim/demand_env.hpp"
#include "pricesim/errors.hpp"
#include "pricesim/policy.hpp"
#include "pricesim/pricing.hpp"
#include "pricesim/random.hpp"

namespace pricesim {

inline double expected_revenue(const ClusterInstance& inst, int product, const ContextVector& ctx, double price) {
  return price * expected_demand(inst, product, ctx, price);
}

/// Clairvoyant price and revenue under the true demand model.
inline RevenueMax oracle_price(const ClusterInstance& inst, int product, const ContextVector& ctx) {
  if (!inst.misspecified() && inst.link.kind == LinkKind::Linear) {
    const ThetaVector& th = inst.theta_of(product);
    const double p = price_optimize(inst.link, th.alpha.dot(ctx.x), th.beta, inst.price_bounds);
    return {p, expected_revenue(inst, product, ctx, p)};
  }
  return maximize_revenue([&](double p) { return expected_demand(inst, product, ctx, p); }, inst.price_bounds);
}

struct TraceRow {
  long t = 0;
  int product = 0;
  int true_cluster = 0;
  int nbhd_size = 0;
  bool recovery = false;
  double price = 0.0;
  double delta = 0.0;
  int outcome = 0;
  double p_star = 0.0;
  double r_star = 0.0;
  double r_policy = 0.0;
  double inst_regret = 0.0;
  double cum_regret = 0.0;

  double realized_revenue() const { return outcome ? price : 0.0; }
  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct RegretTrace {
  std::string policy;
  int rep = 0;
  std::uint64_t seed = 0;
  std::size_t clamp_count = 0;
  std::vector<TraceRow> rows;

  long horizon() const { return static_cast<long>(rows.size()); }
  double cumulative_regret() const { return rows.empty() ? 0.0 : rows.back().cum_regret; }
  double oracle_revenue(long up_to) const {
    double s = 0.0;
    for (long k = 0; k < up_to; ++k) s += rows[static_cast<std::size_t>(k)].r_star;
    return s;
  }
  friend bool operator==(const RegretTrace&, const RegretTrace&) = default;
};

struct RunOptions {
  long T = 1000;
  CovariateMode covariates;
  /// Price every product each period (and draw every context) instead of only
  /// the arriving one.
  bool exhaustive = false;
};

/// One replication of the sale process. The environment (arrivals, contexts,
/// purchases) and the policy (perturbation signs, k-means) use separate
/// substreams of `seed`, so policies run on the same seed see the same
/// customers and contexts.
inline RegretTrace run_replication(const ClusterInstance& inst, const PolicyConfig& config, const RunOptions& run,
                                   std::uint64_t seed, int rep = 0) {
  if (run.T < 1) throw ConfigError("T", "horizon must be at least 1");
  Rng env(derive_seed(seed, 1));
  Rng prng(derive_seed(seed, 2));
  const ArrivalSampler arrivals(inst.q);

  std::vector<std::vector<int>> clusters(static_cast<std::size_t>(inst.m));
  for (int i = 0; i < inst.n; ++i) clusters[static_cast<std::size_t>(inst.cluster_of(i))].push_back(i);

  const bool oracle = config.kind == PolicyKind::Oracle;
  std::optional<PricingPolicy> policy;
  if (!oracle) policy.emplace(config, inst);

  RegretTrace trace;
  trace.policy = config.name;
  trace.rep = rep;
  trace.seed = seed;
  trace.rows.reserve(static_cast<std::size_t>(run.T));
  double cum = 0.0;
  std::vector<ContextVector> all_contexts;

  for (long t = 1; t <= run.T; ++t) {
    int i = 0;
    ContextVector ctx;
    if (run.exhaustive) {
      all_contexts.clear();
      for (int j = 0; j < inst.n; ++j) all_contexts.push_back(sample_context(run.covariates, inst.d, t, env));
      i = arrivals(env);
      ctx = all_contexts[static_cast<std::size_t>(i)];
    } else {
      i = arrivals(env);
      ctx = sample_context(run.covariates, inst.d, t, env);
    }

    const RevenueMax best = oracle_price(inst, i, ctx);
    TraceRow row;
    row.t = t;
    row.product = i;
    row.true_cluster = inst.cluster_of(i);
    row.p_star = best.price;
    row.r_star = best.revenue;

    if (oracle) {
      row.price = best.price;
    } else {
      try {
        PriceDecision decision;
        if (run.exhaustive) {
          for (int j = 0; j < inst.n; ++j) {
            PriceDecision dj = policy->price(j, all_contexts[static_cast<std::size_t>(j)], t, prng);
            if (j == i) decision = std::move(dj);
          }
        } else {
          decision = policy->price(i, ctx, t, prng);
        }
        row.price = decision.price;
        row.delta = decision.delta;
        row.nbhd_size = static_cast<int>(decision.neighborhood.size());
        row.recovery = decision.neighborhood.members == clusters[static_cast<std::size_t>(row.true_cluster)];
      } catch (const EstimationError& e) {
        throw EstimationError("period " + std::to_string(t) + ": " + e.what());
      }
    }

    row.r_policy = expected_revenue(inst, i, ctx, row.price);
    row.inst_regret = row.r_star - row.r_policy;
    cum += row.inst_regret;
    row.cum_regret = cum;
    const double prob = purchase_probability(inst, i, ctx, row.price, &trace.clamp_count);
    row.outcome = sample_purchase(prob, env);
    if (policy) policy->update(SalesRecord{t, i, ctx.design(row.price), row.delta, row.outcome});
    trace.rows.push_back(row);
  }
  return trace;
}

/// Cumulative regret over cumulative clairvoyant revenue at the end of the trace.
inline double percentage_revenue_loss(const RegretTrace& trace) {
  if (trace.rows.empty()) throw UndefinedMetric("empty trace");
  const double oracle = trace.oracle_revenue(trace.horizon());
  if (oracle == 0.0) throw UndefinedMetric("zero oracle revenue");
  return trace.cumulative_regret() / oracle;
}

struct ExperimentSummary {
  std::string policy;
  long T = 0;
  std::vector<long> checkpoints;
  std::vector<double> mean_loss;
  std::vector<double> std_loss;
  std::vector<double> mean_regret;
  std::vector<double> std_regret;
  /// Smoothed recovery rate sampled at the checkpoints.
  std::vector<double> recovery_rate;
  std::size_t clamp_count = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> warnings;
  /// Full smoothed recovery curve, one entry per period (not serialized).
  std::vector<double> recovery_curve;

  friend bool operator==(const ExperimentSummary&, const ExperimentSummary&) = default;
};

inline constexpr int kRecoverySmoothingWindow = 100;

namespace detail {

inline std::pair<double, double> mean_and_sample_std(const std::vector<double>& xs) {
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

} // namespace detail

/// Per-checkpoint mean and sample standard deviation (n - 1 denominator) of
/// percentage revenue loss and cumulative regret across replications, plus the
/// recovery-rate curve smoothed over a trailing window.
inline ExperimentSummary aggregate(std::span<const RegretTrace> traces, std::vector<long> checkpoints) {
  if (traces.empty()) throw UndefinedMetric("no traces to aggregate");
  const long T = traces.front().horizon();
  for (const auto& tr : traces)
    if (tr.horizon() != T) throw InvalidInput("traces differ in horizon");
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  for (long c : checkpoints)
    if (c < 1 || c > T) throw ConfigError("checkpoints", "checkpoint outside [1, T]");

  ExperimentSummary s;
  s.policy = traces.front().policy;
  s.T = T;
  s.checkpoints = checkpoints;
  if (traces.size() < 2) s.warnings.push_back("fewer than 2 replications: standard deviations reported as 0");

  for (const auto& tr : traces) {
    s.clamp_count += tr.clamp_count;
    s.seeds.push_back(tr.seed);
  }

  // Prefix sums of oracle revenue per trace.
  std::vector<std::vector<double>> oracle_prefix;
  for (const auto& tr : traces) {
    std::vector<double> pre(static_cast<std::size_t>(T));
    double acc = 0.0;
    for (long k = 0; k < T; ++k) pre[static_cast<std::size_t>(k)] = acc += tr.rows[static_cast<std::size_t>(k)].r_star;
    oracle_prefix.push_back(std::move(pre));
  }

  std::vector<double> raw_rate(static_cast<std::size_t>(T), 0.0);
  for (const auto& tr : traces)
    for (long k = 0; k < T; ++k) raw_rate[static_cast<std::size_t>(k)] += tr.rows[static_cast<std::size_t>(k)].recovery;
  for (auto& r : raw_rate) r /= static_cast<double>(traces.size());
  s.recovery_curve.resize(static_cast<std::size_t>(T));
  double window = 0.0;
  for (long k = 0; k < T; ++k) {
    window += raw_rate[static_cast<std::size_t>(k)];
    if (k >= kRecoverySmoothingWindow) window -= raw_rate[static_cast<std::size_t>(k - kRecoverySmoothingWindow)];
    s.recovery_curve[static_cast<std::size_t>(k)] =
        window / static_cast<double>(std::min<long>(k + 1, kRecoverySmoothingWindow));
  }

  for (long c : checkpoints) {
    std::vector<double> losses, regrets;
    for (std::size_t r = 0; r < traces.size(); ++r) {
      const double regret = traces[r].rows[static_cast<std::size_t>(c - 1)].cum_regret;
      const double oracle = oracle_prefix[r][static_cast<std::size_t>(c - 1)];
      if (oracle == 0.0) throw UndefinedMetric("zero oracle revenue at checkpoint " + std::to_string(c));
      regrets.push_back(regret);
      losses.push_back(regret / oracle);
    }
    const auto [ml, sl] = detail::mean_and_sample_std(losses);
    const auto [mr, sr] = detail::mean_and_sample_std(regrets);
    s.mean_loss.push_back(ml);
    s.std_loss.push_back(sl);
    s.mean_regret.push_back(mr);
    s.std_regret.push_back(sr);
    s.recovery_rate.push_back(s.recovery_curve[static_cast<std::size_t>(c - 1)]);
  }
  return s;
}

/// Mean of the unsmoothed recovery indicator over the last `fraction` of periods.
inline double final_recovery_rate(std::span<const RegretTrace> traces, double fraction) {
  double hits = 0.0, total = 0.0;
  for (const auto& tr : traces) {
    const auto T = static_cast<std::size_t>(tr.horizon());
    const auto start = T - static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(T)));
    for (std::size_t k = start; k < T; ++k) {
      hits += tr.rows[k].recovery;
      total += 1.0;
    }
  }
  return total > 0 ? hits / total : 0.0;
}

inline std::uint64_t replication_seed(std::uint64_t master, int rep) {
  return derive_seed(master, 0x5eed, static_cast<std::uint64_t>(rep));
}

struct ExperimentRun {
  std::vector<RegretTrace> traces; // completed replications, ordered by rep
  std::vector<std::pair<int, std::string>> failures;

  bool complete() const { return failures.empty(); }
};

/// Runs `reps` independent replications on `jobs` worker threads. Results do
/// not depend on the number of workers. `on_trace` (optional) is called once
/// per finished replication, serialized under a lock.
inline ExperimentRun run_experiment(const ClusterInstance& inst, const PolicyConfig& config, const RunOptions& run,
                                    std::uint64_t master_seed, int reps, int jobs = 1,
                                    const std::function<void(const RegretTrace&)>& on_trace = {}) {
  if (reps < 1) throw ConfigError("replications", "must be at least 1");
  std::vector<std::optional<RegretTrace>> slots(static_cast<std::size_t>(reps));
  std::vector<std::string> errors(static_cast<std::size_t>(reps));
  std::atomic<int> next{0};
  std::mutex sink;

  const auto worker = [&] {
    for (int r = next++; r < reps; r = next++) {
      try {
        RegretTrace tr = run_replication(inst, config, run, replication_seed(master_seed, r), r);
        if (on_trace) {
          std::lock_guard lock(sink);
          on_trace(tr);
        }
        slots[static_cast<std::size_t>(r)] = std::move(tr);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(r)] = e.what();
      }
    }
  };

  const int workers = std::clamp(jobs, 1, reps);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  ExperimentRun out;
  for (int r = 0; r < reps; ++r) {
    if (slots[static_cast<std::size_t>(r)]) out.traces.push_back(std::move(*slots[static_cast<std::size_t>(r)]));
    else out.failures.emplace_back(r, errors[static_cast<std::size_t>(r)]);
  }
  return out;
}

} // namespace pricesim
