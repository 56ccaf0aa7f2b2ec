#pragma once

// Three-level hierarchical AR(1) model for net migration rates.
//
//   level 1:  r[c,t] - mu[c] = phi[c] (r[c,t-1] - mu[c]) + eps,  eps ~ N(0, sigma2[c])
//   level 2:  phi[c] ~ U(0,1),  mu[c] ~ N(lambda, tau^2),  sigma2[c] ~ IG(a, b)
//   level 3:  a ~ U(1,10),  b | a ~ U(0, 100(a-1)),  lambda ~ U(-100,100),  tau ~ U(0,100)
//
// IG(a, b) is shape-rate: density b^a / Gamma(a) x^(-a-1) exp(-b/x).
// The likelihood conditions on each country's first observed rate.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "migproj/error.hpp"
#include "migproj/panel.hpp"

namespace migproj {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct CountryParams {
  double mu = 0.0;      // equilibrium rate, per thousand
  double phi = 0.5;     // autoregressive coefficient in (0,1)
  double sigma2 = 1.0;  // innovation variance, (per thousand)^2

  bool in_support() const { return phi > 0.0 && phi < 1.0 && sigma2 > 0.0 && std::isfinite(mu) && std::isfinite(sigma2); }
  friend bool operator==(const CountryParams&, const CountryParams&) = default;
};

struct HyperParams {
  double a = 2.0;       // inverse-gamma shape
  double b = 1.0;       // inverse-gamma rate
  double lambda = 0.0;  // mean of country equilibria
  double tau = 1.0;     // sd of country equilibria

  bool in_support() const {
    return a > 1.0 && a < 10.0 && b > 0.0 && b < 100.0 * (a - 1.0) && lambda > -100.0 && lambda < 100.0 &&
           tau > 0.0 && tau < 100.0;
  }
  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

struct ModelState {
  std::vector<CountryParams> countries;
  HyperParams hyper;

  bool in_support() const {
    if (!hyper.in_support()) return false;
    for (const auto& c : countries) {
      if (!c.in_support()) return false;
    }
    return true;
  }
  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Observed part of a series: strips leading missing values and rejects any
/// later gap.
inline std::span<const double> observed_suffix(std::span<const double> series) {
  std::size_t first = 0;
  while (first < series.size() && is_missing(series[first])) ++first;
  const auto tail = series.subspan(first);
  for (const double v : tail) {
    if (is_missing(v)) throw ValidationError("series has an interior gap");
  }
  return tail;
}

/// Sufficient statistics of the AR(1) transitions (x = r[t-1], y = r[t]).
struct TransitionStats {
  std::size_t n = 0;
  double shift = 0.0;  // first observed value; sums below are of values minus shift
  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;

  static TransitionStats from_series(std::span<const double> series) {
    const auto obs = observed_suffix(series);
    if (obs.size() < 2) throw ValidationError("AR(1) likelihood needs at least 2 consecutive observations");
    TransitionStats s;
    s.shift = obs[0];
    for (std::size_t t = 1; t < obs.size(); ++t) {
      const double x = obs[t - 1] - s.shift, y = obs[t] - s.shift;
      ++s.n;
      s.sx += x;
      s.sy += y;
      s.sxx += x * x;
      s.syy += y * y;
      s.sxy += x * y;
    }
    return s;
  }

  /// Sum of (y - phi x) over transitions.
  double sum_innovation(double phi) const { return sy - phi * sx + static_cast<double>(n) * (1.0 - phi) * shift; }

  /// Sum of squared residuals y - mu(1-phi) - phi x.
  double ssr(double mu, double phi) const {
    const double k = (mu - shift) * (1.0 - phi);
    const double q = syy - 2.0 * phi * sxy + phi * phi * sxx;
    const double v = q - 2.0 * k * (sy - phi * sx) + static_cast<double>(n) * k * k;
    return v > 0.0 ? v : 0.0;
  }
};

inline double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * d * d / var;
}

/// log IG(x; shape, rate) with density rate^shape / Gamma(shape) x^(-shape-1) e^(-rate/x).
inline double log_inverse_gamma_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

/// Sum over transitions t = 2..T of log N(r_t; mu(1-phi) + phi r_{t-1}, sigma2).
inline double loglik_country(const CountryParams& p, std::span<const double> series) {
  const auto obs = observed_suffix(series);
  if (obs.size() < 2) throw ValidationError("AR(1) likelihood needs at least 2 consecutive observations");
  double ll = 0.0;
  for (std::size_t t = 1; t < obs.size(); ++t) {
    ll += log_normal_pdf(obs[t], p.mu + p.phi * (obs[t - 1] - p.mu), p.sigma2);
  }
  return ll;
}

/// Log density of b | a: uniform on (0, 100(a-1)).
inline double log_b_given_a(double a, double b) {
  if (!(a > 1.0) || !(b > 0.0) || !(b < 100.0 * (a - 1.0))) return kNegInf;
  return -std::log(100.0 * (a - 1.0));
}

inline double log_hyperprior(const HyperParams& h) {
  if (!h.in_support()) return kNegInf;
  return -std::log(9.0) + log_b_given_a(h.a, h.b) - std::log(200.0) - std::log(100.0);
}

/// Levels 2 and 3. Out-of-support states give -inf.
inline double logprior(const ModelState& state) {
  double lp = log_hyperprior(state.hyper);
  if (lp == kNegInf) return kNegInf;
  const auto& h = state.hyper;
  const double tau2 = h.tau * h.tau;
  for (const auto& c : state.countries) {
    if (!c.in_support()) return kNegInf;
    lp += log_normal_pdf(c.mu, h.lambda, tau2) + log_inverse_gamma_pdf(c.sigma2, h.a, h.b);
  }
  return lp;
}

inline double logposterior(const ModelState& state, const RatePanel& panel) {
  if (state.countries.size() != panel.n_countries()) {
    throw DimensionError("model state has " + std::to_string(state.countries.size()) + " countries, panel has " +
                         std::to_string(panel.n_countries()));
  }
  double lp = logprior(state);
  if (lp == kNegInf) return kNegInf;
  for (std::size_t c = 0; c < panel.n_countries(); ++c) lp += loglik_country(state.countries[c], panel.row(c));
  return lp;
}

}  // namespace migproj
