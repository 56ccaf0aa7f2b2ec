#pragma once

// Metropolis-within-Gibbs sampler for the hierarchical AR(1) model.
//
// One iteration is a full sweep in a fixed order: for every country mu, sigma2
// (both exact conjugate draws) then phi (random walk on logit phi); then lambda
// (exact truncated-normal draw), tau (random walk on log tau) and finally a
// joint random walk on (a, b). Metropolis scales adapt toward 35% acceptance
// during burn-in only and are frozen afterwards.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "migproj/error.hpp"
#include "migproj/model.hpp"
#include "migproj/panel.hpp"
#include "migproj/rng.hpp"

namespace migproj {

inline constexpr double kTargetAcceptance = 0.35;
inline constexpr std::size_t kAdaptBatch = 50;
inline constexpr std::size_t kMinObservedForFit = 3;

struct ProposalScales {
  double phi = 1.0;  // sd on the logit scale
  double tau = 0.2;  // sd on the log scale
  double a = 0.2;
  double b = 0.5;
};

struct SamplerConfig {
  std::size_t n_chains = 3;
  std::size_t n_iter = 20000;
  std::size_t n_burnin = 10000;
  std::size_t thin = 10;
  std::uint64_t seed = 0;
  ProposalScales scales;
  bool adapt_burnin = true;
  std::size_t threads = 1;  // chains run concurrently up to this many at once

  void validate() const {
    if (n_chains < 1) throw ValidationError("sampler: n_chains must be >= 1");
    if (n_burnin >= n_iter) throw ValidationError("sampler: n_burnin must be < n_iter");
    if (thin < 1) throw ValidationError("sampler: thin must be >= 1");
    if (!(scales.phi > 0.0 && scales.tau > 0.0 && scales.a > 0.0 && scales.b > 0.0)) {
      throw ValidationError("sampler: proposal scales must be > 0");
    }
  }

  std::size_t draws_per_chain() const { return (n_iter - n_burnin) / thin; }
};

struct Draw {
  std::size_t chain = 0;
  std::size_t iter = 0;
  ModelState state;
  friend bool operator==(const Draw&, const Draw&) = default;
};

/// Post-burn-in acceptance fractions for the Metropolis moves.
struct AcceptanceRates {
  double phi = 0.0;
  double tau = 0.0;
  double ab = 0.0;
  friend bool operator==(const AcceptanceRates&, const AcceptanceRates&) = default;
};

struct PosteriorSample {
  std::vector<std::string> country_codes;
  std::size_t n_chains = 0;
  std::vector<Draw> draws;                   // grouped by chain, ascending iteration
  std::vector<AcceptanceRates> acceptance;   // one entry per chain

  std::size_t n_countries() const { return country_codes.size(); }
  friend bool operator==(const PosteriorSample&, const PosteriorSample&) = default;
};

// --- Single-parameter updates ----------------------------------------------

struct MhResult {
  double value = 0.0;
  bool accepted = false;
};

/// Metropolis accept/reject on a log acceptance ratio.
inline bool mh_accept(double log_ratio, Rng& rng) {
  if (std::isnan(log_ratio)) return false;
  return std::log(rng.uniform()) < log_ratio;
}

/// Exact draw from the full conditional of mu[c]:
/// N(m, 1/P), P = 1/tau^2 + n(1-phi)^2/sigma2,
/// m = [lambda/tau^2 + (1-phi)/sigma2 * sum(r_t - phi r_{t-1})] / P.
inline double update_mu(const TransitionStats& s, double phi, double sigma2, double lambda, double tau, Rng& rng) {
  const double w = 1.0 - phi;
  const double tau2 = tau * tau;
  const double precision = 1.0 / tau2 + static_cast<double>(s.n) * w * w / sigma2;
  const double mean = (lambda / tau2 + w / sigma2 * s.sum_innovation(phi)) / precision;
  return rng.normal(mean, 1.0 / std::sqrt(precision));
}

/// Exact draw from IG(a + n/2, b + SSR/2).
inline double update_sigma2(const TransitionStats& s, double mu, double phi, double a, double b, Rng& rng) {
  return rng.inverse_gamma(a + 0.5 * static_cast<double>(s.n), b + 0.5 * s.ssr(mu, phi));
}

/// Log full conditional of phi on the logit scale (includes the Jacobian).
inline double log_phi_target(const TransitionStats& s, double mu, double sigma2, double phi) {
  return -s.ssr(mu, phi) / (2.0 * sigma2) + std::log(phi) + std::log1p(-phi);
}

inline MhResult update_phi(const TransitionStats& s, double mu, double sigma2, double phi, double scale, Rng& rng) {
  const double z = std::log(phi) - std::log1p(-phi);
  const double z_new = z + scale * rng.normal();
  if (z_new == z) return {phi, true};
  const double proposal = 1.0 / (1.0 + std::exp(-z_new));
  if (!(proposal > 0.0 && proposal < 1.0)) return {phi, false};
  const double log_ratio = log_phi_target(s, mu, sigma2, proposal) - log_phi_target(s, mu, sigma2, phi);
  if (mh_accept(log_ratio, rng)) return {proposal, true};
  return {phi, false};
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

/// Draw from N(mean, sd^2) truncated to the open interval (lo, hi) by
/// inverting the CDF on the truncated range. Works on the lower tail side so
/// that CDF values stay accurate.
inline double truncated_normal(double mean, double sd, double lo, double hi, Rng& rng) {
  double alpha = (lo - mean) / sd;
  double beta = (hi - mean) / sd;
  const bool flip = alpha + beta > 0.0;
  if (flip) {
    const double t = alpha;
    alpha = -beta;
    beta = -t;
  }
  const double p_lo = normal_cdf(alpha);
  const double p_hi = normal_cdf(beta);
  double z = 0.0;
  if (p_hi - p_lo > 0.0) {
    const double u = p_lo + rng.uniform() * (p_hi - p_lo);
    z = normal_quantile(std::clamp(u, std::numeric_limits<double>::min(), 1.0 - 0x1.0p-53));
  } else {
    z = beta;  // all mass is beyond double precision; the nearest bound
  }
  if (flip) z = -z;
  const double x = std::clamp(mean + sd * z, std::nextafter(lo, hi), std::nextafter(hi, lo));
  return x;
}

/// Exact draw of lambda from N(mean(mu), tau^2/C) truncated to (-100, 100).
inline double update_lambda(std::span<const double> mus, double tau, Rng& rng) {
  const double c = static_cast<double>(mus.size());
  const double mean = std::accumulate(mus.begin(), mus.end(), 0.0) / c;
  return truncated_normal(mean, tau / std::sqrt(c), -100.0, 100.0, rng);
}

/// Log target of tau on the log scale: -C log tau - S/(2 tau^2) + log tau.
inline double log_tau_target(std::size_t n_countries, double sum_sq, double tau) {
  return -static_cast<double>(n_countries) * std::log(tau) - sum_sq / (2.0 * tau * tau) + std::log(tau);
}

inline MhResult update_tau(std::span<const double> mus, double lambda, double tau, double scale, Rng& rng) {
  double sum_sq = 0.0;
  for (const double m : mus) sum_sq += (m - lambda) * (m - lambda);
  const double proposal = tau * std::exp(scale * rng.normal());
  if (!(proposal > 0.0 && proposal < 100.0)) return {tau, false};
  const double log_ratio =
      log_tau_target(mus.size(), sum_sq, proposal) - log_tau_target(mus.size(), sum_sq, tau);
  if (mh_accept(log_ratio, rng)) return {proposal, true};
  return {tau, false};
}

/// Summaries of the sigma2 values that the (a, b) target depends on.
struct InverseGammaSums {
  std::size_t n = 0;
  double sum_log = 0.0;  // sum log sigma2
  double sum_inv = 0.0;  // sum 1/sigma2

  static InverseGammaSums of(std::span<const double> sigma2s) {
    InverseGammaSums s;
    for (const double v : sigma2s) {
      ++s.n;
      s.sum_log += std::log(v);
      s.sum_inv += 1.0 / v;
    }
    return s;
  }
};

/// Log full conditional of (a, b): sum_c log IG(sigma2_c; a, b) plus the
/// hyperprior log density, -inf outside 1 < a < 10, 0 < b < 100(a-1).
inline double log_ab_target(double a, double b, const InverseGammaSums& s) {
  if (!(a > 1.0 && a < 10.0 && b > 0.0 && b < 100.0 * (a - 1.0))) return kNegInf;
  const double n = static_cast<double>(s.n);
  return n * (a * std::log(b) - std::lgamma(a)) - (a + 1.0) * s.sum_log - b * s.sum_inv + log_b_given_a(a, b);
}

/// Lower-triangular factor of the (a, b) proposal covariance.
struct AbProposal {
  double l11 = 0.2, l21 = 0.0, l22 = 0.5;

  static AbProposal diagonal(double scale_a, double scale_b) { return {scale_a, 0.0, scale_b}; }

  AbProposal scaled(double f) const { return {l11 * f, l21 * f, l22 * f}; }
};

struct AbResult {
  double a = 0.0;
  double b = 0.0;
  bool accepted = false;
};

inline AbResult update_ab(const InverseGammaSums& sums, double a, double b, const AbProposal& prop, Rng& rng) {
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  const double a_new = a + prop.l11 * z1;
  const double b_new = b + prop.l21 * z1 + prop.l22 * z2;
  const double target_new = log_ab_target(a_new, b_new, sums);
  if (target_new == kNegInf) return {a, b, false};
  if (mh_accept(target_new - log_ab_target(a, b, sums), rng)) return {a_new, b_new, true};
  return {a, b, false};
}

inline AbResult update_ab(std::span<const double> sigma2s, double a, double b, const AbProposal& prop, Rng& rng) {
  return update_ab(InverseGammaSums::of(sigma2s), a, b, prop, rng);
}

// --- Chains -----------------------------------------------------------------

namespace detail {

inline std::string dump_state(const ModelState& s, const std::vector<std::string>& codes, std::size_t chain,
                              std::size_t iter) {
  std::ostringstream os;
  os.precision(17);
  os << "chain " << chain << " iteration " << iter << ": a=" << s.hyper.a << " b=" << s.hyper.b
     << " lambda=" << s.hyper.lambda << " tau=" << s.hyper.tau;
  for (std::size_t c = 0; c < s.countries.size(); ++c) {
    const auto& p = s.countries[c];
    if (!p.in_support()) {
      os << "; " << codes[c] << " mu=" << p.mu << " phi=" << p.phi << " sigma2=" << p.sigma2;
    }
  }
  return os.str();
}

/// Moves log(scale) by +-delta depending on the batch acceptance rate.
inline double adapt_log_scale(double log_scale, double rate, std::size_t batch_index) {
  const double delta = std::min(0.5, 1.0 / std::sqrt(static_cast<double>(batch_index)));
  return log_scale + (rate > kTargetAcceptance ? delta : -delta);
}

struct ChainResult {
  std::vector<Draw> draws;
  AcceptanceRates acceptance;
};

inline ModelState initial_state(const RatePanel& panel, Rng& rng) {
  ModelState s;
  const std::size_t C = panel.n_countries();
  s.countries.resize(C);
  std::vector<double> mus(C), sig(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto obs = observed_suffix(panel.row(c));
    const double n = static_cast<double>(obs.size());
    const double mean = std::accumulate(obs.begin(), obs.end(), 0.0) / n;
    double var = 0.0;
    for (const double v : obs) var += (v - mean) * (v - mean);
    var = std::max(var / (n - 1.0), 1e-2);
    auto& p = s.countries[c];
    p.mu = mean + 0.1 * std::sqrt(var) * rng.normal();
    p.phi = 0.2 + 0.6 * rng.uniform();
    p.sigma2 = var * std::exp(0.2 * rng.normal());
    mus[c] = p.mu;
    sig[c] = p.sigma2;
  }
  const double mean_mu = std::accumulate(mus.begin(), mus.end(), 0.0) / static_cast<double>(C);
  double var_mu = 0.0;
  for (const double m : mus) var_mu += (m - mean_mu) * (m - mean_mu);
  var_mu /= std::max<double>(1.0, static_cast<double>(C) - 1.0);
  s.hyper.lambda = std::clamp(mean_mu, -99.0, 99.0);
  s.hyper.tau = std::clamp(std::sqrt(var_mu), 0.5, 99.0);
  s.hyper.a = 1.5 + 2.5 * rng.uniform();
  std::nth_element(sig.begin(), sig.begin() + static_cast<std::ptrdiff_t>(C / 2), sig.end());
  s.hyper.b = std::min(s.hyper.a * sig[C / 2], 50.0 * (s.hyper.a - 1.0));
  return s;
}

inline bool finite_state(const ModelState& s) {
  if (!(std::isfinite(s.hyper.a) && std::isfinite(s.hyper.b) && std::isfinite(s.hyper.lambda) &&
        std::isfinite(s.hyper.tau))) {
    return false;
  }
  for (const auto& p : s.countries) {
    if (!std::isfinite(p.mu) || !std::isfinite(p.phi) || !(p.sigma2 > 0.0) || !std::isfinite(p.sigma2)) return false;
  }
  return true;
}

inline ChainResult run_chain(const RatePanel& panel, const std::vector<TransitionStats>& stats,
                             const SamplerConfig& cfg, std::size_t chain) {
  Rng rng = Rng::substream(cfg.seed, chain);
  const std::size_t C = panel.n_countries();
  ModelState s = initial_state(panel, rng);

  std::vector<double> log_phi_scale(C, std::log(cfg.scales.phi));
  double log_tau_scale = std::log(cfg.scales.tau);
  double log_ab_factor = 0.0;
  AbProposal ab_shape = AbProposal::diagonal(cfg.scales.a, cfg.scales.b);

  std::vector<std::size_t> phi_batch_acc(C, 0);
  std::size_t tau_batch_acc = 0, ab_batch_acc = 0;
  std::size_t batch_index = 0;
  std::size_t phi_acc = 0, tau_acc = 0, ab_acc = 0, kept_iters = 0;

  // (a, b) history from the second quarter of burn-in on, to shape the proposal.
  std::vector<double> hist_a, hist_b;
  const std::size_t hist_start = cfg.n_burnin / 4;

  std::vector<double> mus(C), sig(C);
  ChainResult out;
  out.draws.reserve(cfg.draws_per_chain());

  for (std::size_t iter = 0; iter < cfg.n_iter; ++iter) {
    const bool burning = iter < cfg.n_burnin;
    auto& h = s.hyper;
    for (std::size_t c = 0; c < C; ++c) {
      auto& p = s.countries[c];
      p.mu = update_mu(stats[c], p.phi, p.sigma2, h.lambda, h.tau, rng);
      p.sigma2 = update_sigma2(stats[c], p.mu, p.phi, h.a, h.b, rng);
      const auto r = update_phi(stats[c], p.mu, p.sigma2, p.phi, std::exp(log_phi_scale[c]), rng);
      p.phi = r.value;
      if (r.accepted) {
        ++phi_batch_acc[c];
        if (!burning) ++phi_acc;
      }
      mus[c] = p.mu;
      sig[c] = p.sigma2;
    }
    h.lambda = update_lambda(mus, h.tau, rng);
    const auto rt = update_tau(mus, h.lambda, h.tau, std::exp(log_tau_scale), rng);
    h.tau = rt.value;
    const auto rab = update_ab(sig, h.a, h.b, ab_shape.scaled(std::exp(log_ab_factor)), rng);
    h.a = rab.a;
    h.b = rab.b;
    if (rt.accepted) {
      ++tau_batch_acc;
      if (!burning) ++tau_acc;
    }
    if (rab.accepted) {
      ++ab_batch_acc;
      if (!burning) ++ab_acc;
    }

    if (!finite_state(s)) {
      throw NumericalError("sampler produced a non-finite state: " + dump_state(s, panel.country_codes(), chain, iter));
    }

    if (burning && cfg.adapt_burnin) {
      if (iter >= hist_start) {
        hist_a.push_back(h.a);
        hist_b.push_back(h.b);
      }
      if ((iter + 1) % kAdaptBatch == 0) {
        ++batch_index;
        const double nb = static_cast<double>(kAdaptBatch);
        for (std::size_t c = 0; c < C; ++c) {
          log_phi_scale[c] = adapt_log_scale(log_phi_scale[c], static_cast<double>(phi_batch_acc[c]) / nb, batch_index);
          phi_batch_acc[c] = 0;
        }
        log_tau_scale = adapt_log_scale(log_tau_scale, static_cast<double>(tau_batch_acc) / nb, batch_index);
        log_ab_factor = adapt_log_scale(log_ab_factor, static_cast<double>(ab_batch_acc) / nb, batch_index);
        tau_batch_acc = ab_batch_acc = 0;
        // Reshape the (a, b) proposal along the empirical covariance.
        if (hist_a.size() >= 200 && batch_index % 4 == 0) {
          const double n = static_cast<double>(hist_a.size());
          const double ma = std::accumulate(hist_a.begin(), hist_a.end(), 0.0) / n;
          const double mb = std::accumulate(hist_b.begin(), hist_b.end(), 0.0) / n;
          double vaa = 0.0, vbb = 0.0, vab = 0.0;
          for (std::size_t i = 0; i < hist_a.size(); ++i) {
            vaa += (hist_a[i] - ma) * (hist_a[i] - ma);
            vbb += (hist_b[i] - mb) * (hist_b[i] - mb);
            vab += (hist_a[i] - ma) * (hist_b[i] - mb);
          }
          vaa = vaa / (n - 1.0) + 1e-8;
          vbb = vbb / (n - 1.0) + 1e-8;
          vab /= (n - 1.0);
          const double l11 = std::sqrt(vaa);
          const double l21 = vab / l11;
          const double rem = vbb - l21 * l21;
          if (rem > 1e-12 && std::isfinite(rem)) {
            const double f = 2.38 / std::sqrt(2.0);
            ab_shape = AbProposal{l11 * f, l21 * f, std::sqrt(rem) * f};
            log_ab_factor = 0.0;
          }
        }
      }
    } else if (burning) {
      std::fill(phi_batch_acc.begin(), phi_batch_acc.end(), 0);
      tau_batch_acc = ab_batch_acc = 0;
    }

    if (!burning) {
      ++kept_iters;
      if ((iter - cfg.n_burnin + 1) % cfg.thin == 0) {
        if (logposterior(s, panel) == kNegInf) {
          throw NumericalError("sampler left the prior support: " + dump_state(s, panel.country_codes(), chain, iter));
        }
        out.draws.push_back(Draw{chain, iter, s});
      }
    }
  }
  const double k = static_cast<double>(std::max<std::size_t>(kept_iters, 1));
  out.acceptance.phi = static_cast<double>(phi_acc) / (k * static_cast<double>(C));
  out.acceptance.tau = static_cast<double>(tau_acc) / k;
  out.acceptance.ab = static_cast<double>(ab_acc) / k;
  return out;
}

}  // namespace detail

/// Runs `cfg.n_chains` independent chains. The result is a pure function of
/// (panel, cfg); `cfg.threads` only changes wall-clock time.
inline PosteriorSample run_chains(const RatePanel& panel, const SamplerConfig& cfg) {
  cfg.validate();
  if (panel.n_countries() == 0) throw ValidationError("sampler: panel has no countries");
  std::vector<TransitionStats> stats;
  stats.reserve(panel.n_countries());
  for (std::size_t c = 0; c < panel.n_countries(); ++c) {
    if (panel.n_observed(c) < kMinObservedForFit) {
      throw ValidationError("sampler: country " + panel.country_codes()[c] + " has fewer than " +
                            std::to_string(kMinObservedForFit) + " observed periods");
    }
    stats.push_back(TransitionStats::from_series(panel.row(c)));
  }

  std::vector<detail::ChainResult> results(cfg.n_chains);
  std::vector<std::exception_ptr> errors(cfg.n_chains);
  const std::size_t workers = std::clamp<std::size_t>(cfg.threads, 1, cfg.n_chains);
  if (workers == 1) {
    for (std::size_t k = 0; k < cfg.n_chains; ++k) results[k] = detail::run_chain(panel, stats, cfg, k);
  } else {
    std::mutex m;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          std::size_t k = 0;
          {
            std::lock_guard lock(m);
            if (next >= cfg.n_chains) return;
            k = next++;
          }
          try {
            results[k] = detail::run_chain(panel, stats, cfg, k);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  PosteriorSample out;
  out.country_codes = panel.country_codes();
  out.n_chains = cfg.n_chains;
  for (auto& r : results) {
    out.acceptance.push_back(r.acceptance);
    for (auto& d : r.draws) out.draws.push_back(std::move(d));
  }
  return out;
}

}  // namespace migproj
