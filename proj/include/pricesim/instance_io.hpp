#pragma once

#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "pricesim/demand_env.hpp"

namespace pricesim {

using json = nlohmann::json;

namespace detail {

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

inline Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  return v;
}

inline json theta_to_json(const ThetaVector& t) {
  return json{{"alpha", vector_to_json(t.alpha)}, {"beta", t.beta}};
}

inline ThetaVector theta_from_json(const json& j) {
  return ThetaVector{vector_from_json(j.at("alpha")), j.at("beta").get<double>()};
}

} // namespace detail

inline json instance_to_json(const ClusterInstance& inst) {
  json j;
  j["n"] = inst.n;
  j["m"] = inst.m;
  j["d"] = inst.d;
  j["L"] = inst.L;
  j["link"] = std::string(to_string(inst.link.kind));
  j["price_bounds"] = {inst.price_bounds.lower, inst.price_bounds.upper};
  j["q"] = inst.q;
  j["assignment"] = inst.assignment;
  j["theta"] = json::array();
  for (const auto& t : inst.theta) j["theta"].push_back(detail::theta_to_json(t));
  j["centers"] = json::array();
  for (const auto& t : inst.centers) j["centers"].push_back(detail::theta_to_json(t));
  j["gamma"] = std::isfinite(inst.gamma) ? json(inst.gamma) : json(nullptr);
  j["gamma0"] = inst.gamma0;
  j["theta_radius"] = inst.theta_radius;
  if (inst.misspecified()) {
    j["misspec"] = json::array();
    for (const auto& mc : inst.misspec)
      j["misspec"].push_back({{"c0", mc.c0},
                              {"c1", detail::vector_to_json(mc.c1)},
                              {"c2", detail::vector_to_json(mc.c2)},
                              {"c3", detail::vector_to_json(mc.c3)},
                              {"b1", mc.b1},
                              {"b2", mc.b2},
                              {"b3", mc.b3}});
  } else {
    j["misspec"] = nullptr;
  }
  j["seed"] = inst.seed;
  return j;
}

/// Parses and checks the structural invariants of an instance document.
inline ClusterInstance instance_from_json(const json& j) {
  ClusterInstance inst;
  try {
    inst.n = j.at("n").get<int>();
    inst.m = j.at("m").get<int>();
    inst.d = j.at("d").get<int>();
    inst.L = j.at("L").get<double>();
    inst.link = parse_link(j.at("link").get<std::string>());
    inst.price_bounds = {j.at("price_bounds").at(0).get<double>(), j.at("price_bounds").at(1).get<double>()};
    inst.q = j.at("q").get<std::vector<double>>();
    inst.assignment = j.at("assignment").get<std::vector<int>>();
    for (const auto& t : j.at("theta")) inst.theta.push_back(detail::theta_from_json(t));
    for (const auto& t : j.at("centers")) inst.centers.push_back(detail::theta_from_json(t));
    inst.gamma = j.at("gamma").is_null() ? std::numeric_limits<double>::infinity() : j.at("gamma").get<double>();
    inst.gamma0 = j.at("gamma0").get<double>();
    inst.theta_radius = j.at("theta_radius").get<double>();
    if (j.contains("misspec") && !j.at("misspec").is_null()) {
      for (const auto& e : j.at("misspec")) {
        MisspecCoefficients mc;
        mc.c0 = e.at("c0").get<double>();
        mc.c1 = detail::vector_from_json(e.at("c1"));
        mc.c2 = detail::vector_from_json(e.at("c2"));
        mc.c3 = detail::vector_from_json(e.at("c3"));
        mc.b1 = e.at("b1").get<double>();
        mc.b2 = e.at("b2").get<double>();
        mc.b3 = e.at("b3").get<double>();
        inst.misspec.push_back(std::move(mc));
      }
    }
    inst.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError("instance", e.what());
  }

  const auto n = static_cast<std::size_t>(inst.n);
  if (inst.n < 1 || inst.m < 1 || inst.m > inst.n) throw ConfigError("instance.m", "need 1 <= m <= n");
  if (inst.q.size() != n) throw ConfigError("instance.q", "length must equal n");
  if (inst.assignment.size() != n) throw ConfigError("instance.assignment", "length must equal n");
  if (inst.theta.size() != n) throw ConfigError("instance.theta", "length must equal n");
  if (!inst.misspec.empty() && inst.misspec.size() != n)
    throw ConfigError("instance.misspec", "length must equal n");
  std::vector<int> used(static_cast<std::size_t>(inst.m), 0);
  for (int a : inst.assignment) {
    if (a < 0 || a >= inst.m) throw ConfigError("instance.assignment", "cluster index out of range");
    used[static_cast<std::size_t>(a)] = 1;
  }
  for (int u : used)
    if (!u) throw ConfigError("instance.assignment", "empty cluster");
  for (const auto& t : inst.theta)
    if (t.alpha.size() != inst.d + 1) throw ConfigError("instance.theta", "alpha length must be d+1");
  return inst;
}

inline void save_instance(const ClusterInstance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("output", "cannot open '" + path + "' for writing");
  out << instance_to_json(inst).dump(2) << '\n';
}

inline ClusterInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("instance", "cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("instance", e.what());
  }
  return instance_from_json(j);
}

} // namespace pricesim
