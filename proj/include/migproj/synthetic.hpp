#pragma once

// Model-true synthetic panels: parameters are drawn from the hierarchical
// prior at fixed hyperparameters and rates are simulated forward from each
// country's stationary distribution.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "migproj/csv.hpp"
#include "migproj/diagnostics.hpp"
#include "migproj/model.hpp"
#include "migproj/panel.hpp"
#include "migproj/rng.hpp"

namespace migproj {

struct SyntheticSpec {
  std::size_t n_countries = 50;
  std::size_t n_periods = 12;
  int first_period = 1950;
  int horizon = 2100;  // populations cover every period ending by this year
  HyperParams hyper{3.0, 10.0, 0.0, 3.0};
  std::size_t n_age_groups = 5;  // times two sexes
  std::uint64_t seed = 1;
};

struct SyntheticData {
  RatePanel rates;
  PopulationPanel populations;
  ScheduleSet schedules;
  ModelState truth;
};

/// "AAA", "AAB", ... for index 0, 1, ...
inline std::string synthetic_code(std::size_t i) {
  std::string s(3, 'A');
  for (int k = 2; k >= 0; --k) {
    s[static_cast<std::size_t>(k)] = static_cast<char>('A' + i % 26);
    i /= 26;
  }
  return s;
}

/// Simulates `n_periods` rates from the AR(1) with the first value drawn from
/// the stationary distribution N(mu, sigma2 / (1 - phi^2)).
inline std::vector<double> simulate_series(const CountryParams& p, std::size_t n_periods, Rng& rng) {
  std::vector<double> r(n_periods);
  if (n_periods == 0) return r;
  r[0] = rng.normal(p.mu, std::sqrt(p.sigma2 / (1.0 - p.phi * p.phi)));
  for (std::size_t t = 1; t < n_periods; ++t) r[t] = p.mu + p.phi * (r[t - 1] - p.mu) + std::sqrt(p.sigma2) * rng.normal();
  return r;
}

inline CountryParams draw_country_params(const HyperParams& h, Rng& rng) {
  CountryParams p;
  p.mu = rng.normal(h.lambda, h.tau);
  do {
    p.phi = rng.uniform();
  } while (!(p.phi > 0.0 && p.phi < 1.0));
  p.sigma2 = rng.inverse_gamma(h.a, h.b);
  return p;
}

inline SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.n_countries == 0 || spec.n_periods == 0) throw ValidationError("synthetic: empty panel requested");
  Rng rng(spec.seed);
  SyntheticData out;
  out.truth.hyper = spec.hyper;

  std::vector<std::string> codes;
  std::vector<int> periods;
  for (std::size_t t = 0; t < spec.n_periods; ++t) periods.push_back(spec.first_period + static_cast<int>(t) * kPeriodLength);
  std::vector<double> rates;
  for (std::size_t c = 0; c < spec.n_countries; ++c) {
    codes.push_back(synthetic_code(c));
    const auto p = draw_country_params(spec.hyper, rng);
    out.truth.countries.push_back(p);
    const auto series = simulate_series(p, spec.n_periods, rng);
    rates.insert(rates.end(), series.begin(), series.end());
  }
  out.rates = RatePanel(codes, periods, std::move(rates));

  std::vector<int> pop_periods;
  for (int p = spec.first_period; p <= std::max(spec.horizon, periods.back()); p += kPeriodLength) pop_periods.push_back(p);
  std::vector<double> pops;
  for (std::size_t c = 0; c < spec.n_countries; ++c) {
    double n = std::exp(rng.normal(std::log(5000.0), 1.5));
    const double growth = std::pow(1.0 + (-0.002 + 0.022 * rng.uniform()), kPeriodLength);
    for (std::size_t t = 0; t < pop_periods.size(); ++t) {
      pops.push_back(n);
      n *= growth;
    }
  }
  out.populations = PopulationPanel(codes, pop_periods, std::move(pops));

  std::vector<ScheduleCell> cells;
  for (std::size_t g = 0; g < spec.n_age_groups; ++g) {
    const std::string age = "g" + std::to_string(g);
    cells.push_back({age, "F"});
    cells.push_back({age, "M"});
  }
  std::vector<MigrationSchedule> schedules;
  for (const auto& code : codes) {
    std::vector<double> w(cells.size());
    double s = 0.0;
    for (auto& v : w) s += (v = rng.gamma(2.0));
    for (auto& v : w) v /= s;
    schedules.push_back({code, std::move(w)});
  }
  out.schedules = ScheduleSet(std::move(cells), std::move(schedules));
  return out;
}

/// `param_name,value` listing of a state, names as in `parameter_names`.
inline std::string state_to_csv(const ModelState& s, const std::vector<std::string>& codes) {
  const auto names = parameter_names(codes);
  const auto values = parameter_values(s);
  std::string out = "param_name,value\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    out += names[i] + ',';
    csv::append_double(out, values[i]);
    out += '\n';
  }
  return out;
}

}  // namespace migproj
