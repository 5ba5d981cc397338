#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "pricesim/errors.hpp"

namespace pricesim {

enum class LinkKind { Linear, Logistic };

/// Purchase-probability link mu together with the GLM cumulant m (m' = mu).
struct LinkFunction {
  LinkKind kind = LinkKind::Logistic;

  double mean(double v) const noexcept {
    if (kind == LinkKind::Linear) return v;
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  }

  double derivative(double v) const noexcept {
    if (kind == LinkKind::Linear) return 1.0;
    const double mu = mean(v);
    return mu * (1.0 - mu);
  }

  double second_derivative(double v) const noexcept {
    if (kind == LinkKind::Linear) return 0.0;
    const double mu = mean(v);
    return mu * (1.0 - mu) * (1.0 - 2.0 * mu);
  }

  /// m(v): log(1 + e^v) for logistic, v^2/2 for linear.
  double cumulant(double v) const noexcept {
    if (kind == LinkKind::Linear) return 0.5 * v * v;
    return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }

  friend bool operator==(const LinkFunction&, const LinkFunction&) = default;
};

inline constexpr LinkFunction kLinearLink{LinkKind::Linear};
inline constexpr LinkFunction kLogisticLink{LinkKind::Logistic};

inline std::string_view to_string(LinkKind kind) {
  return kind == LinkKind::Linear ? "linear" : "logistic";
}

inline LinkFunction parse_link(std::string_view name) {
  if (name == "linear") return kLinearLink;
  if (name == "logistic" || name == "logit") return kLogisticLink;
  throw ConfigError("link", "unknown link function '" + std::string(name) + "'");
}

} // namespace pricesim
