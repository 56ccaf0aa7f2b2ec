#pragma once

// Point-projection baselines: persistence and a two-term gravity model.
//
// Gravity model for one country with own population L and rest-of-world
// population M (both millions):
//     net(t) = a L^alpha M^beta - b L^gamma M^delta     (millions per year)
// alpha..delta are fixed; a and b come from no-intercept least squares on the
// historical net counts. No zero-sum redistribution is applied.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "migproj/error.hpp"
#include "migproj/panel.hpp"

namespace migproj {

/// Each country's last rate repeated over `n_periods` future periods
/// (country-major, countries x periods).
inline std::vector<double> persistence_project(std::span<const double> last_rates, std::size_t n_periods) {
  std::vector<double> out;
  out.reserve(last_rates.size() * n_periods);
  for (const double r : last_rates) out.insert(out.end(), n_periods, r);
  return out;
}

struct GravityExponents {
  double alpha = 0.728;
  double beta = 0.602;
  double gamma = 0.373;
  double delta = 0.948;
};

struct GravityParams {
  double a = 0.0;  // in-migration constant
  double b = 0.0;  // out-migration constant; may be negative
  GravityExponents exponents;
};

namespace detail {

inline void gravity_regressors(const GravityExponents& e, double L, double M, double& x, double& y) {
  if (!(L > 0.0) || !(M > 0.0)) throw ValidationError("gravity: populations must be > 0");
  x = std::pow(L, e.alpha) * std::pow(M, e.beta);
  y = std::pow(L, e.gamma) * std::pow(M, e.delta);
}

}  // namespace detail

/// Least squares for net = a X - b Y with X = L^alpha M^beta, Y = L^gamma M^delta.
/// Inputs in millions. Normal equations accumulate in long double.
inline GravityParams gravity_fit(std::span<const double> net_millions, std::span<const double> L,
                                 std::span<const double> M, const GravityExponents& e = {}) {
  if (net_millions.size() != L.size() || L.size() != M.size()) throw DimensionError("gravity_fit: length mismatch");
  if (net_millions.size() < 2) throw ValidationError("gravity_fit: need at least 2 historical periods");
  long double sxx = 0, syy = 0, sxy = 0, sxn = 0, syn = 0;
  for (std::size_t t = 0; t < L.size(); ++t) {
    double x = 0, y = 0;
    detail::gravity_regressors(e, L[t], M[t], x, y);
    const long double n = net_millions[t];
    sxx += static_cast<long double>(x) * x;
    syy += static_cast<long double>(y) * y;
    sxy += static_cast<long double>(x) * y;
    sxn += x * n;
    syn += y * n;
  }
  // Solve [sxx -sxy; sxy -syy] [a; b] = [sxn; syn].
  const long double det = sxx * syy - sxy * sxy;
  if (!(std::fabs(det) > 1e-14L * sxx * syy)) {
    throw NumericalError("gravity_fit: regressors are collinear; the normal equations are singular");
  }
  GravityParams p;
  p.exponents = e;
  p.a = static_cast<double>((sxn * syy - syn * sxy) / det);
  p.b = static_cast<double>((sxn * sxy - syn * sxx) / det);
  return p;
}

/// Net migration in millions per year for each (L, M) pair.
inline std::vector<double> gravity_project(const GravityParams& p, std::span<const double> L, std::span<const double> M) {
  if (L.size() != M.size()) throw DimensionError("gravity_project: length mismatch");
  std::vector<double> out(L.size());
  for (std::size_t t = 0; t < L.size(); ++t) {
    double x = 0, y = 0;
    detail::gravity_regressors(p.exponents, L[t], M[t], x, y);
    out[t] = p.a * x - p.b * y;
  }
  return out;
}

struct CountryGravity {
  std::string country_code;
  GravityParams params;
};

/// Own and rest-of-world populations in millions for one country and period.
inline std::pair<double, double> gravity_populations(const PopulationPanel& pops, const std::string& code, int period) {
  const double own = pops.at(code, period);
  const double world = pops.total(period);
  return {own / 1000.0, (world - own) / 1000.0};
}

/// Fits every country of `rates` on the periods in [from, to] (inclusive).
/// Countries lacking two observed periods in that window are skipped.
inline std::vector<CountryGravity> gravity_fit_panel(const RatePanel& rates, const PopulationPanel& pops, int from,
                                                     int to, const GravityExponents& e = {}) {
  std::vector<CountryGravity> out;
  for (std::size_t c = 0; c < rates.n_countries(); ++c) {
    const auto& code = rates.country_codes()[c];
    std::vector<double> net, L, M;
    for (std::size_t t = 0; t < rates.n_periods(); ++t) {
      const int period = rates.period_starts()[t];
      if (period < from || period > to || is_missing(rates(c, t))) continue;
      const auto [own, rest] = gravity_populations(pops, code, period);
      // rate per thousand x population in millions = thousands; / 1000 -> millions.
      net.push_back(rates(c, t) * own / 1000.0);
      L.push_back(own);
      M.push_back(rest);
    }
    if (net.size() < 2) continue;
    out.push_back({code, gravity_fit(net, L, M, e)});
  }
  return out;
}

/// Gravity projections converted to rates per thousand, countries x periods.
inline std::vector<double> gravity_project_rates(const std::vector<CountryGravity>& fits, const PopulationPanel& pops,
                                                 const std::vector<int>& periods) {
  std::vector<double> out;
  out.reserve(fits.size() * periods.size());
  for (const auto& f : fits) {
    std::vector<double> L, M;
    for (const int p : periods) {
      const auto [own, rest] = gravity_populations(pops, f.country_code, p);
      L.push_back(own);
      M.push_back(rest);
    }
    const auto net = gravity_project(f.params, L, M);
    for (std::size_t t = 0; t < periods.size(); ++t) out.push_back(net[t] * 1000.0 / L[t]);
  }
  return out;
}

}  // namespace migproj
