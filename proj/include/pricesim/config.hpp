#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pricesim/demand_env.hpp"
#include "pricesim/errors.hpp"
#include "pricesim/harness.hpp"
#include "pricesim/policy.hpp"

namespace pricesim {

struct InstanceSection {
  int n = 100;
  int m = 10;
  int d = 5;
  double L = 10.0;
  LinkKind link = LinkKind::Logistic;
  PriceBounds price_bounds{0.0, 10.0};
  double gamma0 = 0.0;
  /// Empty means uniform arrivals.
  std::vector<double> q;
  CovariateMode covariates;
  bool misspec = false;
  double min_separation = 0.0;
  std::uint64_t seed = 1;

  InstanceOptions options() const {
    InstanceOptions o;
    o.n = n;
    o.m = m;
    o.d = d;
    o.L = L;
    o.link = link == LinkKind::Linear ? kLinearLink : kLogisticLink;
    o.gamma0 = gamma0;
    o.price_bounds = price_bounds;
    o.misspec = misspec;
    o.min_separation = min_separation;
    o.q = q;
    o.seed = seed;
    return o;
  }
  friend bool operator==(const InstanceSection&, const InstanceSection&) = default;
};

struct RunSection {
  long T = 30000;
  int replications = 30;
  std::uint64_t seed = 20240601;
  std::vector<long> checkpoints{5000, 10000, 15000, 20000, 25000, 30000};
  bool exhaustive = false;
  std::string output = "runs";
  friend bool operator==(const RunSection&, const RunSection&) = default;
};

struct ExperimentConfig {
  std::string name = "custom";
  InstanceSection instance;
  std::vector<PolicyConfig> policies;
  RunSection run;

  RunOptions run_options() const {
    RunOptions r;
    r.T = run.T;
    r.covariates = instance.covariates;
    r.exhaustive = run.exhaustive;
    return r;
  }
  const PolicyConfig& policy(const std::string& name) const {
    for (const auto& p : policies)
      if (p.name == name) return p;
    throw ConfigError("policies", "no policy named '" + name + "' in experiment '" + this->name + "'");
  }
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// ---------------------------------------------------------------------------
// Named policy presets.

inline std::vector<std::string> policy_preset_names() {
  return {"CSMP",           "SMP-IND",         "SMP-ONE",         "CSMP-KMeans-5", "CSMP-KMeans-10",
          "CSMP-KMeans-20", "CSMP-KMeans-30", "CSMP-L",          "Oracle"};
}

inline PolicyConfig policy_preset(const std::string& name) {
  PolicyConfig p;
  p.name = name;
  if (name == "CSMP") return p;
  if (name == "SMP-IND") {
    p.kind = PolicyKind::SMP_IND;
    return p;
  }
  if (name == "SMP-ONE") {
    p.kind = PolicyKind::SMP_ONE;
    return p;
  }
  if (name.starts_with("CSMP-KMeans-")) {
    p.kind = PolicyKind::CSMP_KMEANS;
    try {
      std::size_t used = 0;
      p.K = std::stoi(name.substr(12), &used);
      if (used == name.size() - 12 && p.K >= 1) return p;
    } catch (const std::exception&) {
    }
  }
  if (name == "CSMP-L") return PolicyConfig::csmp_l_collapsed(name, 0.04);
  if (name == "Oracle") {
    p.kind = PolicyKind::Oracle;
    return p;
  }
  throw ConfigError("policies", "unknown policy preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// JSON.

namespace detail {

using json = nlohmann::json;

/// Reads object fields by key, recording the path for diagnostics and rejecting
/// keys it was never asked about.
class FieldReader {
public:
  FieldReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(at(key), "wrong type");
    }
  }

  template <class T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(at(key), "missing");
    T out{};
    get(key, out);
    return out;
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError(at(k), "unknown field");
  }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline double finite_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

} // namespace detail

inline nlohmann::json policy_to_json(const PolicyConfig& p) {
  nlohmann::json j;
  j["name"] = p.name;
  j["kind"] = std::string(to_string(p.kind));
  j["c"] = p.c;
  j["c1"] = p.c1;
  j["c2"] = p.c2;
  j["delta0"] = p.delta0;
  j["gamma0"] = p.gamma0;
  j["upsilon"] = p.upsilon;
  j["K"] = p.K;
  j["kmeans_restarts"] = p.kmeans_restarts;
  j["kmeans_max_iter"] = p.kmeans_max_iter;
  j["recluster_every"] = p.recluster_every;
  j["ridge_lambda"] = p.ridge_lambda;
  j["beta_interval"] = p.beta_interval ? nlohmann::json::array({p.beta_interval->lower, p.beta_interval->upper})
                                       : nlohmann::json(nullptr);
  j["theta_radius"] = p.theta_radius ? nlohmann::json(*p.theta_radius) : nlohmann::json(nullptr);
  j["mle_tolerance"] = p.mle_tolerance;
  j["mle_tolerance_per_record"] = p.mle_tolerance_per_record;
  return j;
}

/// A string names a preset; an object may start from a preset ("preset") and
/// override any field.
inline PolicyConfig policy_from_json(const nlohmann::json& j, const std::string& path) {
  if (j.is_string()) {
    try {
      return policy_preset(j.get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(path, e.message());
    }
  }
  detail::FieldReader r(j, path);
  PolicyConfig p;
  if (r.has("preset")) {
    const auto name = r.require<std::string>("preset");
    try {
      p = policy_preset(name);
    } catch (const ConfigError&) {
      throw ConfigError(r.at("preset"), "unknown policy preset '" + name + "'");
    }
  }
  r.get("name", p.name);
  if (r.has("kind")) {
    const auto kind = r.require<std::string>("kind");
    try {
      p.kind = parse_policy_kind(kind);
    } catch (const ConfigError&) {
      throw ConfigError(r.at("kind"), "unknown policy kind '" + kind + "'");
    }
  }
  r.get("c", p.c);
  r.get("c1", p.c1);
  r.get("c2", p.c2);
  r.get("delta0", p.delta0);
  r.get("gamma0", p.gamma0);
  r.get("upsilon", p.upsilon);
  r.get("K", p.K);
  r.get("kmeans_restarts", p.kmeans_restarts);
  r.get("kmeans_max_iter", p.kmeans_max_iter);
  r.get("recluster_every", p.recluster_every);
  r.get("ridge_lambda", p.ridge_lambda);
  if (r.has("beta_interval")) {
    const auto& b = r.raw("beta_interval");
    if (b.is_null()) p.beta_interval.reset();
    else if (b.is_array() && b.size() == 2)
      p.beta_interval = Interval{detail::finite_number(b[0], r.at("beta_interval[0]")),
                                 detail::finite_number(b[1], r.at("beta_interval[1]"))};
    else throw ConfigError(r.at("beta_interval"), "expected [lower, upper] or null");
  }
  if (r.has("theta_radius")) {
    const auto& v = r.raw("theta_radius");
    if (v.is_null()) p.theta_radius.reset();
    else p.theta_radius = detail::finite_number(v, r.at("theta_radius"));
  }
  r.get("mle_tolerance", p.mle_tolerance);
  r.get("mle_tolerance_per_record", p.mle_tolerance_per_record);
  r.finish();

  // Field-level checks; price-dependent ones run once the instance is known.
  const auto bad = [&](const char* field, const char* why) { throw ConfigError(r.at(field), why); };
  if (p.name.empty()) bad("name", "must not be empty");
  if (!(p.c > 0)) bad("c", "must be positive");
  if (!(p.delta0 > 0)) bad("delta0", "must be positive");
  if (!(p.upsilon >= 0)) bad("upsilon", "must be nonnegative");
  if (!(p.gamma0 >= 0)) bad("gamma0", "must be nonnegative");
  if (p.K < 1) bad("K", "must be at least 1");
  if (p.kmeans_restarts < 1) bad("kmeans_restarts", "must be at least 1");
  if (p.kmeans_max_iter < 1) bad("kmeans_max_iter", "must be at least 1");
  if (p.recluster_every < 1) bad("recluster_every", "must be at least 1");
  if (!(p.ridge_lambda > 0)) bad("ridge_lambda", "must be positive");
  if (!(p.mle_tolerance > 0)) bad("mle_tolerance", "must be positive");
  if (p.beta_interval && !(p.beta_interval->lower <= p.beta_interval->upper)) bad("beta_interval", "empty interval");
  if (p.theta_radius && !(*p.theta_radius > 0)) bad("theta_radius", "must be positive");
  return p;
}

inline nlohmann::json instance_section_to_json(const InstanceSection& s) {
  nlohmann::json j;
  j["n"] = s.n;
  j["m"] = s.m;
  j["d"] = s.d;
  j["L"] = s.L;
  j["link"] = std::string(to_string(s.link));
  j["price_bounds"] = {s.price_bounds.lower, s.price_bounds.upper};
  j["gamma0"] = s.gamma0;
  j["q"] = s.q.empty() ? nlohmann::json("uniform") : nlohmann::json(s.q);
  if (s.covariates.kind == CovariateMode::Kind::AlmostStatic)
    j["covariates"] = {{"mode", "almost_static"}, {"coordinate", s.covariates.coordinate},
                       {"period", s.covariates.period}};
  else j["covariates"] = {{"mode", "iid"}};
  j["misspec"] = s.misspec;
  j["min_separation"] = s.min_separation;
  j["seed"] = s.seed;
  return j;
}

inline InstanceSection instance_section_from_json(const nlohmann::json& j, const std::string& path) {
  detail::FieldReader r(j, path);
  InstanceSection s;
  r.get("n", s.n);
  r.get("m", s.m);
  r.get("d", s.d);
  r.get("L", s.L);
  if (r.has("link")) {
    const auto name = r.require<std::string>("link");
    try {
      s.link = parse_link(name).kind;
    } catch (const std::exception&) {
      throw ConfigError(r.at("link"), "unknown link '" + name + "'");
    }
  }
  if (r.has("price_bounds")) {
    const auto& b = r.raw("price_bounds");
    if (!b.is_array() || b.size() != 2) throw ConfigError(r.at("price_bounds"), "expected [lower, upper]");
    s.price_bounds = {detail::finite_number(b[0], r.at("price_bounds[0]")),
                      detail::finite_number(b[1], r.at("price_bounds[1]"))};
  }
  r.get("gamma0", s.gamma0);
  if (r.has("q")) {
    const auto& q = r.raw("q");
    if (q.is_string()) {
      if (q.get<std::string>() != "uniform") throw ConfigError(r.at("q"), "expected \"uniform\" or a list");
    } else if (q.is_array()) {
      for (std::size_t k = 0; k < q.size(); ++k)
        s.q.push_back(detail::finite_number(q[k], r.at("q[" + std::to_string(k) + "]")));
    } else {
      throw ConfigError(r.at("q"), "expected \"uniform\" or a list");
    }
  }
  if (r.has("covariates")) {
    detail::FieldReader c(r.raw("covariates"), r.at("covariates"));
    const auto mode = c.require<std::string>("mode");
    if (mode == "iid") {
      s.covariates = CovariateMode::iid();
    } else if (mode == "almost_static") {
      int coord = 0, period = 100;
      c.get("coordinate", coord);
      c.get("period", period);
      s.covariates = CovariateMode::almost_static(coord, period);
    } else {
      throw ConfigError(c.at("mode"), "expected \"iid\" or \"almost_static\"");
    }
    c.finish();
  }
  r.get("misspec", s.misspec);
  r.get("min_separation", s.min_separation);
  r.get("seed", s.seed);
  r.finish();

  if (s.n < 1) throw ConfigError(r.at("n"), "must be at least 1");
  if (s.m < 1) throw ConfigError(r.at("m"), "must be at least 1");
  if (s.m > s.n) throw ConfigError(r.at("m"), "cluster count m must not exceed product count n");
  if (s.d < 1) throw ConfigError(r.at("d"), "must be at least 1");
  if (!(s.L > 0)) throw ConfigError(r.at("L"), "must be positive");
  if (!(s.price_bounds.lower < s.price_bounds.upper) || s.price_bounds.lower < 0)
    throw ConfigError(r.at("price_bounds"), "need 0 <= lower < upper");
  if (!(s.gamma0 >= 0)) throw ConfigError(r.at("gamma0"), "must be nonnegative");
  if (!(s.min_separation >= 0)) throw ConfigError(r.at("min_separation"), "must be nonnegative");
  if (!s.q.empty()) {
    if (s.q.size() != static_cast<std::size_t>(s.n)) throw ConfigError(r.at("q"), "length must equal n");
    double sum = 0.0;
    for (double v : s.q) {
      if (!(v >= 0)) throw ConfigError(r.at("q"), "entries must be nonnegative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(r.at("q"), "entries must sum to 1");
  }
  if (s.covariates.kind == CovariateMode::Kind::AlmostStatic) {
    if (s.covariates.coordinate < 0 || s.covariates.coordinate >= s.d)
      throw ConfigError(r.at("covariates.coordinate"), "must index a covariate in [0, d)");
    if (s.covariates.period < 1) throw ConfigError(r.at("covariates.period"), "must be at least 1");
  }
  if (s.misspec && s.link != LinkKind::Logistic)
    throw ConfigError(r.at("misspec"), "the misspecified model is logistic");
  return s;
}

inline nlohmann::json run_section_to_json(const RunSection& s) {
  return {{"T", s.T},
          {"replications", s.replications},
          {"seed", s.seed},
          {"checkpoints", s.checkpoints},
          {"exhaustive", s.exhaustive},
          {"output", s.output}};
}

inline RunSection run_section_from_json(const nlohmann::json& j, const std::string& path) {
  detail::FieldReader r(j, path);
  RunSection s;
  r.get("T", s.T);
  r.get("replications", s.replications);
  r.get("seed", s.seed);
  r.get("checkpoints", s.checkpoints);
  r.get("exhaustive", s.exhaustive);
  r.get("output", s.output);
  r.finish();
  if (s.T < 1) throw ConfigError(r.at("T"), "must be at least 1");
  if (s.replications < 1) throw ConfigError(r.at("replications"), "must be at least 1");
  for (std::size_t k = 0; k < s.checkpoints.size(); ++k) {
    if (s.checkpoints[k] < 1 || s.checkpoints[k] > s.T)
      throw ConfigError(r.at("checkpoints[" + std::to_string(k) + "]"), "must lie in [1, T]");
    if (k && s.checkpoints[k] <= s.checkpoints[k - 1])
      throw ConfigError(r.at("checkpoints[" + std::to_string(k) + "]"), "checkpoints must be strictly increasing");
  }
  return s;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["instance"] = instance_section_to_json(c.instance);
  j["policies"] = nlohmann::json::array();
  for (const auto& p : c.policies) j["policies"].push_back(policy_to_json(p));
  j["run"] = run_section_to_json(c.run);
  return j;
}

/// Checks that need more than one section.
inline void validate_config(const ExperimentConfig& c) {
  if (c.policies.empty()) throw ConfigError("policies", "at least one policy is required");
  std::set<std::string> names;
  for (std::size_t k = 0; k < c.policies.size(); ++k) {
    const auto& p = c.policies[k];
    const std::string path = "policies[" + std::to_string(k) + "]";
    if (!names.insert(p.name).second) throw ConfigError(path + ".name", "duplicate policy name '" + p.name + "'");
    if (p.kind == PolicyKind::CSMP_KMEANS && p.K > c.instance.n)
      throw ConfigError(path + ".K", "K must not exceed the product count n");
    if (p.kind == PolicyKind::Oracle) continue;
    try {
      validate(p, c.instance.price_bounds);
    } catch (const ConfigError& e) {
      throw ConfigError(path + "." + e.path(), e.message());
    }
  }
  if (!c.run.checkpoints.empty() && c.run.checkpoints.back() > c.run.T)
    throw ConfigError("run.checkpoints", "must not exceed T");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  detail::FieldReader r(j, "config");
  ExperimentConfig c;
  r.get("name", c.name);
  if (r.has("instance")) c.instance = instance_section_from_json(r.raw("instance"), "instance");
  if (!r.has("policies")) throw ConfigError("policies", "missing");
  const auto& ps = r.raw("policies");
  if (!ps.is_array()) throw ConfigError("policies", "expected a list");
  for (std::size_t k = 0; k < ps.size(); ++k)
    c.policies.push_back(policy_from_json(ps[k], "policies[" + std::to_string(k) + "]"));
  if (r.has("run")) c.run = run_section_from_json(r.raw("run"), "run");
  r.finish();
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", e.what());
  }
  return config_from_json(j);
}

inline void save_config(const ExperimentConfig& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("output", "cannot open '" + path + "' for writing");
  out << config_to_json(c).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Experiment presets.

inline std::vector<std::string> experiment_preset_names() {
  return {"logit10", "linear10", "logit-relaxed", "logit-static", "logit-misspec", "logit-separated"};
}

inline ExperimentConfig experiment_preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.run.output = "runs/" + name;
  const auto named = [](std::string n, PolicyConfig p) {
    p.name = std::move(n);
    return p;
  };

  if (name == "logit10") {
    for (const auto& p : {"CSMP", "SMP-IND", "SMP-ONE", "CSMP-KMeans-5", "CSMP-KMeans-10", "CSMP-KMeans-20",
                          "CSMP-KMeans-30"})
      c.policies.push_back(policy_preset(p));
  } else if (name == "linear10") {
    c.instance.link = LinkKind::Linear;
    c.instance.L = 1.0;
    PolicyConfig csmp = policy_preset("CSMP");
    csmp.c = 0.01;
    c.policies = {csmp, PolicyConfig::csmp_l_collapsed("CSMP-L", 0.04), policy_preset("SMP-IND"),
                  policy_preset("SMP-ONE"), policy_preset("CSMP-KMeans-10")};
  } else if (name == "logit-relaxed") {
    c.instance.gamma0 = 1.0; // jitter entries in [-L/(10 sqrt(d+2)), L/(10 sqrt(d+2))]
    PolicyConfig relaxed = policy_preset("CSMP");
    relaxed.gamma0 = 1.0;
    relaxed.upsilon = 0.1;
    c.policies = {policy_preset("CSMP"), named("CSMP-relaxed", relaxed), policy_preset("SMP-IND"),
                  policy_preset("SMP-ONE"), policy_preset("CSMP-KMeans-10")};
  } else if (name == "logit-static") {
    c.instance.covariates = CovariateMode::almost_static(0, 100);
    PolicyConfig csmp = policy_preset("CSMP");
    csmp.c = 0.1;
    c.policies = {csmp, policy_preset("SMP-IND"), policy_preset("SMP-ONE"), policy_preset("CSMP-KMeans-10")};
  } else if (name == "logit-misspec") {
    c.instance.misspec = true;
    c.policies = {policy_preset("CSMP"), policy_preset("SMP-IND"), policy_preset("SMP-ONE")};
  } else if (name == "logit-separated") {
    // Few products with well-separated centers: enough data per product for
    // the neighborhoods to settle on the true clusters.
    c.instance.n = 20;
    c.instance.m = 4;
    c.instance.min_separation = 4.0;
    c.policies = {policy_preset("CSMP")};
  } else {
    throw ConfigError("preset", "unknown experiment preset '" + name + "'");
  }
  validate_config(c);
  return c;
}

} // namespace pricesim
