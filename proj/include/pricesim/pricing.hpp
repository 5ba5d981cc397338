#pragma once

#include <algorithm>
#include <cmath>

#include "pricesim/demand_env.hpp"
#include "pricesim/link.hpp"
#include "pricesim/random.hpp"

namespace pricesim {

struct RevenueMax {
  double price = 0.0;
  double revenue = 0.0;
};

inline constexpr int kPriceGridPoints = 200;
inline constexpr double kGoldenWidth = 1e-8;

/// Maximises p * demand(p) over the bounds: a uniform grid locates the best
/// cell, golden-section search refines inside the neighbouring cells. Ties go to
/// the lower price. Assumes the revenue is unimodal at grid resolution.
template <class Demand>
RevenueMax maximize_revenue(Demand&& demand, const PriceBounds& bounds, int grid_points = kPriceGridPoints,
                            double width = kGoldenWidth) {
  const auto revenue = [&](double p) { return p * demand(p); };
  const double step = bounds.width() / (grid_points - 1);

  int best_k = 0;
  double best_r = revenue(bounds.lower);
  for (int k = 1; k < grid_points; ++k) {
    const double p = k == grid_points - 1 ? bounds.upper : bounds.lower + k * step;
    const double r = revenue(p);
    if (r > best_r) {
      best_r = r;
      best_k = k;
    }
  }
  const double best_p = best_k == grid_points - 1 ? bounds.upper : bounds.lower + best_k * step;

  double a = std::max(bounds.lower, best_p - step);
  double b = std::min(bounds.upper, best_p + step);
  constexpr double kInvPhi = 0.6180339887498949;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = revenue(c), fd = revenue(d);
  while (b - a > width) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = revenue(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = revenue(d);
    }
  }
  const double refined = 0.5 * (a + b);
  const double refined_r = revenue(refined);
  if (refined_r > best_r) return {refined, refined_r};
  return {best_p, best_r};
}

/// argmax_p p * mu(ax + beta p) on the bounds. Linear link uses the closed form
/// -ax / (2 beta) clipped to the bounds (endpoint comparison if beta >= 0).
inline double price_optimize(const LinkFunction& link, double ax, double beta, const PriceBounds& bounds) {
  if (link.kind == LinkKind::Linear) {
    if (beta < 0) return std::clamp(-ax / (2.0 * beta), bounds.lower, bounds.upper);
    const auto r = [&](double p) { return p * (ax + beta * p); };
    return r(bounds.upper) > r(bounds.lower) ? bounds.upper : bounds.lower;
  }
  return maximize_revenue([&](double p) { return link.mean(ax + beta * p); }, bounds).price;
}

/// |Delta| = delta0 * max(pooled_count^{-1/4}, upsilon).
inline double perturbation_magnitude(double delta0, double pooled_count, double upsilon = 0.0) {
  return delta0 * std::max(std::pow(pooled_count, -0.25), upsilon);
}

/// Signed exploration perturbation; the sign is a fair coin.
inline double perturbation(double delta0, double pooled_count, double upsilon, Rng& rng) {
  const double mag = perturbation_magnitude(delta0, pooled_count, upsilon);
  return coin_flip(rng) ? mag : -mag;
}

/// Proj_[lower + |Delta|, upper - |Delta|](p_raw); an empty interval collapses
/// to the midpoint of the bounds.
inline double project_price(double p_raw, double delta_mag, const PriceBounds& bounds) {
  const double lo = bounds.lower + delta_mag;
  const double hi = bounds.upper - delta_mag;
  if (lo > hi) return 0.5 * (bounds.lower + bounds.upper);
  return std::clamp(p_raw, lo, hi);
}

} // namespace pricesim
