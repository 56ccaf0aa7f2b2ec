#pragma once

// Convergence diagnostics: split-chain potential scale reduction (R-hat) and
// autocorrelation-based effective sample size with Geyer's initial monotone
// positive-sequence truncation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "migproj/error.hpp"
#include "migproj/sampler.hpp"

namespace migproj {

using ChainSeries = std::vector<std::vector<double>>;

namespace detail {

inline double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (const double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double var_of(const std::vector<double>& x, double mean) {
  double s = 0.0;
  for (const double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size() - 1);
}

inline void check_chains(const ChainSeries& chains, std::size_t min_len) {
  if (chains.empty()) throw ValidationError("diagnostics: no chains");
  const auto n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw DimensionError("diagnostics: chains differ in length");
  }
  if (n < min_len) throw ValidationError("diagnostics: chains too short");
}

}  // namespace detail

/// Potential scale reduction computed after splitting every chain in half.
inline double split_rhat(const ChainSeries& chains) {
  detail::check_chains(chains, 4);
  const std::size_t half = chains.front().size() / 2;
  ChainSeries split;
  for (const auto& c : chains) {
    split.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    split.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  const double n = static_cast<double>(half);
  const double m = static_cast<double>(split.size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : split) {
    const double mu = detail::mean_of(c);
    means.push_back(mu);
    w += detail::var_of(c, mu);
  }
  w /= m;
  const double grand = detail::mean_of(means);
  double b = 0.0;
  for (const double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1.0);
  if (w == 0.0) return b == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

/// Effective sample size across all chains.
inline double effective_sample_size(const ChainSeries& chains) {
  detail::check_chains(chains, 4);
  const std::size_t n = chains.front().size();
  const std::size_t m = chains.size();
  const double nd = static_cast<double>(n);

  std::vector<std::vector<double>> centered(m);
  std::vector<double> means(m), vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    means[j] = detail::mean_of(chains[j]);
    centered[j].resize(n);
    for (std::size_t i = 0; i < n; ++i) centered[j][i] = chains[j][i] - means[j];
    vars[j] = detail::var_of(chains[j], means[j]);
  }
  double w = 0.0;
  for (const double v : vars) w += v;
  w /= static_cast<double>(m);
  double b = 0.0;
  if (m > 1) {
    const double grand = detail::mean_of(means);
    for (const double mu : means) b += (mu - grand) * (mu - grand);
    b *= nd / static_cast<double>(m - 1);
  }
  const double var_plus = (nd - 1.0) / nd * w + b / nd;
  if (!(var_plus > 0.0)) return static_cast<double>(n * m);

  // Mean over chains of the biased lag-t autocovariance.
  auto autocov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      const auto& x = centered[j];
      for (std::size_t i = 0; i + lag < n; ++i) s += x[i] * x[i + lag];
      total += s / nd;
    }
    return total / static_cast<double>(m);
  };
  auto rho = [&](std::size_t lag) { return 1.0 - (w - autocov(lag)) / var_plus; };

  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = (k == 0 ? 1.0 : rho(2 * k)) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(nd * static_cast<double>(m)));
  return nd * static_cast<double>(m) / tau;
}

struct ParamDiagnostic {
  std::string name;
  double rhat = 0.0;
  double ess = 0.0;
};

/// Scalar parameter names in a fixed order: per country mu, phi, sigma2, then
/// lambda, tau, a, b.
inline std::vector<std::string> parameter_names(const std::vector<std::string>& codes) {
  std::vector<std::string> names;
  for (const auto& c : codes) {
    names.push_back("mu[" + c + "]");
    names.push_back("phi[" + c + "]");
    names.push_back("sigma2[" + c + "]");
  }
  for (const char* h : {"lambda", "tau", "a", "b"}) names.emplace_back(h);
  return names;
}

/// Flattens a state in `parameter_names` order.
inline std::vector<double> parameter_values(const ModelState& s) {
  std::vector<double> v;
  v.reserve(3 * s.countries.size() + 4);
  for (const auto& p : s.countries) {
    v.push_back(p.mu);
    v.push_back(p.phi);
    v.push_back(p.sigma2);
  }
  v.push_back(s.hyper.lambda);
  v.push_back(s.hyper.tau);
  v.push_back(s.hyper.a);
  v.push_back(s.hyper.b);
  return v;
}

/// R-hat and ESS for every scalar parameter. Needs equal-length chains.
inline std::vector<ParamDiagnostic> diagnostics(const PosteriorSample& sample) {
  const auto names = parameter_names(sample.country_codes);
  std::vector<ChainSeries> series(names.size(), ChainSeries(sample.n_chains));
  for (const auto& d : sample.draws) {
    const auto v = parameter_values(d.state);
    for (std::size_t p = 0; p < v.size(); ++p) series[p][d.chain].push_back(v[p]);
  }
  std::vector<ParamDiagnostic> out;
  out.reserve(names.size());
  for (std::size_t p = 0; p < names.size(); ++p) {
    out.push_back({names[p], split_rhat(series[p]), effective_sample_size(series[p])});
  }
  return out;
}

}  // namespace migproj
