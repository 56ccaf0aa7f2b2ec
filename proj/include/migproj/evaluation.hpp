#pragma once

// Out-of-sample evaluation (hold out the m most recent periods, forecast
// them from the rest) and descriptive trend statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "migproj/baselines.hpp"
#include "migproj/csv.hpp"
#include "migproj/error.hpp"
#include "migproj/panel.hpp"
#include "migproj/projector.hpp"
#include "migproj/sampler.hpp"

namespace migproj {

struct HoldoutSplit {
  RatePanel training;
  RatePanel validation;
  std::size_t m = 0;
};

/// First T - m periods for training, last m for validation; 1 <= m <= T - 3.
inline HoldoutSplit holdout_split(const RatePanel& panel, std::size_t m) {
  const std::size_t T = panel.n_periods();
  if (m < 1 || T < 4 || m > T - 3) {
    throw ValidationError("holdout: m must lie in 1.." + std::to_string(T >= 3 ? T - 3 : 0) + " for " +
                          std::to_string(T) + " periods (got " + std::to_string(m) + ")");
  }
  return {panel.slice_periods(0, T - m), panel.slice_periods(T - m, m), m};
}

/// Mean of |forecast - truth| over cells where both are present.
inline double mae(std::span<const double> forecasts, std::span<const double> truth) {
  if (forecasts.size() != truth.size()) throw DimensionError("mae: length mismatch");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (is_missing(truth[i]) || is_missing(forecasts[i])) continue;
    s += std::abs(forecasts[i] - truth[i]);
    ++n;
  }
  if (n == 0) throw ValidationError("mae: no comparable cells");
  return s / static_cast<double>(n);
}

/// Fraction of cells with lower <= truth <= upper (missing truth skipped).
inline double coverage(std::span<const double> lower, std::span<const double> upper, std::span<const double> truth) {
  if (lower.size() != truth.size() || upper.size() != truth.size()) throw DimensionError("coverage: length mismatch");
  std::size_t hit = 0, n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (is_missing(truth[i])) continue;
    ++n;
    if (lower[i] <= truth[i] && truth[i] <= upper[i]) ++hit;
  }
  if (n == 0) throw ValidationError("coverage: no comparable cells");
  return static_cast<double>(hit) / static_cast<double>(n);
}

/// Equal-tailed empirical interval coverage at `level` (e.g. 0.8), pooling
/// every country-period cell. `truth` is countries x periods aligned with `ts`.
inline double coverage(const TrajectorySet& ts, std::span<const double> truth, double level) {
  if (truth.size() != ts.n_countries() * ts.n_periods()) throw DimensionError("coverage: truth shape mismatch");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("coverage: level must lie in (0, 1)");
  std::vector<double> lo(truth.size()), hi(truth.size());
  const double tail = 0.5 * (1.0 - level);
  for (std::size_t c = 0; c < ts.n_countries(); ++c) {
    for (std::size_t t = 0; t < ts.n_periods(); ++t) {
      auto v = ts.cell_draws(c, t);
      std::sort(v.begin(), v.end());
      lo[c * ts.n_periods() + t] = quantile_sorted(v, tail);
      hi[c * ts.n_periods() + t] = quantile_sorted(v, 1.0 - tail);
    }
  }
  return coverage(lo, hi, truth);
}

// --- Trends ------------------------------------------------------------------

/// Population-weighted mean absolute rate times `factor` per period, over the
/// countries observed in that period. With the default factor 1/2 this is the
/// proportion of the world population migrating, per thousand, treating net
/// counts as gross.
inline std::vector<double> prop_t(const RatePanel& rates, const PopulationPanel& pops, double factor = 0.5) {
  std::vector<double> out;
  for (std::size_t t = 0; t < rates.n_periods(); ++t) {
    const int period = rates.period_starts()[t];
    double abs_count = 0.0, world = 0.0;
    for (std::size_t c = 0; c < rates.n_countries(); ++c) {
      if (is_missing(rates(c, t))) continue;
      const double n = pops.at(rates.country_codes()[c], period);
      abs_count += std::abs(rates(c, t)) * n;
      world += n;
    }
    out.push_back(world > 0.0 ? factor * abs_count / world : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

/// Unweighted mean absolute rate per period over observed countries.
inline std::vector<double> mamr_t(const RatePanel& rates) {
  std::vector<double> out;
  for (std::size_t t = 0; t < rates.n_periods(); ++t) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < rates.n_countries(); ++c) {
      if (is_missing(rates(c, t))) continue;
      s += std::abs(rates(c, t));
      ++n;
    }
    out.push_back(n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

/// The same two statistics per draw of a trajectory set: draws x periods.
inline std::vector<double> prop_t(const TrajectorySet& ts, const PopulationPanel& pops, double factor = 0.5) {
  std::vector<double> out(ts.n_draws * ts.n_periods());
  for (std::size_t t = 0; t < ts.n_periods(); ++t) {
    const auto n = pops.column(ts.country_codes, ts.period_starts[t]);
    double world = 0.0;
    for (const double v : n) world += v;
    for (std::size_t k = 0; k < ts.n_draws; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < ts.n_countries(); ++c) s += std::abs(ts.rate(k, c, t)) * n[c];
      out[k * ts.n_periods() + t] = factor * s / world;
    }
  }
  return out;
}

inline std::vector<double> mamr_t(const TrajectorySet& ts) {
  std::vector<double> out(ts.n_draws * ts.n_periods());
  for (std::size_t k = 0; k < ts.n_draws; ++k) {
    for (std::size_t t = 0; t < ts.n_periods(); ++t) {
      double s = 0.0;
      for (std::size_t c = 0; c < ts.n_countries(); ++c) s += std::abs(ts.rate(k, c, t));
      out[k * ts.n_periods() + t] = s / static_cast<double>(ts.n_countries());
    }
  }
  return out;
}

/// Net sender (negative) vs receiver; a zero rate counts as a receiver.
inline bool parity(double rate) { return rate >= 0.0; }

/// Fraction of countries observed in both periods whose parity differs.
inline double parity_change_fraction(const RatePanel& panel, int period_a, int period_b) {
  const auto ta = panel.period_index(period_a);
  const auto tb = panel.period_index(period_b);
  if (!ta || !tb) throw ValidationError("parity_change_fraction: period not in panel");
  std::size_t changed = 0, n = 0;
  for (std::size_t c = 0; c < panel.n_countries(); ++c) {
    const double a = panel(c, *ta), b = panel(c, *tb);
    if (is_missing(a) || is_missing(b)) continue;
    ++n;
    if (parity(a) != parity(b)) ++changed;
  }
  if (n == 0) throw ValidationError("parity_change_fraction: no country observed in both periods");
  return static_cast<double>(changed) / static_cast<double>(n);
}

/// Per-draw parity change between two simulated periods, averaged over draws.
inline double parity_change_fraction(const TrajectorySet& ts, int period_a, int period_b) {
  const auto ia = std::find(ts.period_starts.begin(), ts.period_starts.end(), period_a);
  const auto ib = std::find(ts.period_starts.begin(), ts.period_starts.end(), period_b);
  if (ia == ts.period_starts.end() || ib == ts.period_starts.end()) {
    throw ValidationError("parity_change_fraction: period not in trajectory set");
  }
  if (ts.n_draws == 0 || ts.n_countries() == 0) throw ValidationError("parity_change_fraction: empty trajectory set");
  const auto ta = static_cast<std::size_t>(ia - ts.period_starts.begin());
  const auto tb = static_cast<std::size_t>(ib - ts.period_starts.begin());
  double total = 0.0;
  for (std::size_t k = 0; k < ts.n_draws; ++k) {
    std::size_t changed = 0;
    for (std::size_t c = 0; c < ts.n_countries(); ++c) {
      if (parity(ts.rate(k, c, ta)) != parity(ts.rate(k, c, tb))) ++changed;
    }
    total += static_cast<double>(changed) / static_cast<double>(ts.n_countries());
  }
  return total / static_cast<double>(ts.n_draws);
}

/// Parity change from an observed period (given as per-country rates aligned
/// with `ts`) to a simulated period, averaged over draws.
inline double parity_change_fraction(std::span<const double> observed, const TrajectorySet& ts, int period_b) {
  if (observed.size() != ts.n_countries()) throw DimensionError("parity_change_fraction: country mismatch");
  const auto ib = std::find(ts.period_starts.begin(), ts.period_starts.end(), period_b);
  if (ib == ts.period_starts.end()) throw ValidationError("parity_change_fraction: period not in trajectory set");
  if (ts.n_draws == 0) throw ValidationError("parity_change_fraction: empty trajectory set");
  const auto tb = static_cast<std::size_t>(ib - ts.period_starts.begin());
  double total = 0.0;
  for (std::size_t k = 0; k < ts.n_draws; ++k) {
    std::size_t changed = 0;
    for (std::size_t c = 0; c < ts.n_countries(); ++c) {
      if (parity(observed[c]) != parity(ts.rate(k, c, tb))) ++changed;
    }
    total += static_cast<double>(changed) / static_cast<double>(ts.n_countries());
  }
  return total / static_cast<double>(ts.n_draws);
}

/// Mean over each group of (median simulated rate at `period` - last observed
/// rate). `groups` maps country code to group label; unlisted countries are
/// ignored.
inline std::map<std::string, double> group_mean_change(const TrajectorySet& ts, const std::map<std::string, std::string>& groups,
                                                       std::span<const double> last_rates, int period) {
  if (last_rates.size() != ts.n_countries()) throw DimensionError("group_mean_change: country mismatch");
  const auto it = std::find(ts.period_starts.begin(), ts.period_starts.end(), period);
  if (it == ts.period_starts.end()) throw ValidationError("group_mean_change: period not in trajectory set");
  const auto t = static_cast<std::size_t>(it - ts.period_starts.begin());
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (std::size_t c = 0; c < ts.n_countries(); ++c) {
    const auto g = groups.find(ts.country_codes[c]);
    if (g == groups.end()) continue;
    const double change = quantile(ts.cell_draws(c, t), 0.5) - last_rates[c];
    auto& a = acc[g->second];
    a.first += change;
    ++a.second;
  }
  std::map<std::string, double> out;
  for (const auto& [g, a] : acc) out[g] = a.first / static_cast<double>(a.second);
  return out;
}

// --- Hold-out protocol ------------------------------------------------------

struct EvalRow {
  int validation_years = 0;
  std::string model;
  double mae = 0.0;
  std::optional<double> coverage80;
  std::optional<double> coverage95;
  std::size_t cells = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
};

inline std::string report_to_csv(const EvalReport& r) {
  std::string out = "validation_years,model,mae,coverage_80,coverage_95,cells\n";
  for (const auto& row : r.rows) {
    out += std::to_string(row.validation_years) + ',' + row.model + ',';
    csv::append_double(out, row.mae);
    out += ',';
    csv::append_double(out, row.coverage80.value_or(std::numeric_limits<double>::quiet_NaN()));
    out += ',';
    csv::append_double(out, row.coverage95.value_or(std::numeric_limits<double>::quiet_NaN()));
    out += ',' + std::to_string(row.cells) + '\n';
  }
  return out;
}

struct EvalOptions {
  std::set<std::string> models{"bayes", "persistence", "gravity"};
  SamplerConfig sampler;
  std::uint64_t projection_seed = 0;
  bool correct = true;
  const ScheduleSet* schedules = nullptr;  // degenerate one-cell schedules when null
};

/// Fits on all but the last m periods and scores forecasts of those m.
/// Countries need three observed training periods to be scored.
inline EvalReport evaluate_holdout(const RatePanel& panel, const PopulationPanel& pops, std::size_t m,
                                   const EvalOptions& opts) {
  const auto split = holdout_split(panel, m);
  const RatePanel training = split.training.with_min_observed(kMinObservedForFit);
  const auto& codes = training.country_codes();
  const auto& periods = split.validation.period_starts();
  const int years = static_cast<int>(m) * kPeriodLength;

  // Truth aligned with the training countries.
  std::vector<double> truth;
  truth.reserve(codes.size() * periods.size());
  for (const auto& code : codes) {
    const auto vc = split.validation.country_index(code);
    for (std::size_t t = 0; t < periods.size(); ++t) {
      truth.push_back(vc ? split.validation(*vc, t) : std::numeric_limits<double>::quiet_NaN());
    }
  }
  std::size_t cells = 0;
  for (const double v : truth) cells += is_missing(v) ? 0 : 1;

  EvalReport report;
  const auto last = training.last_rates();

  if (opts.models.count("bayes")) {
    const auto posterior = run_chains(training, opts.sampler);
    const ScheduleSet fallback = ScheduleSet::degenerate(codes);
    const ScheduleSet& schedules = opts.schedules ? *opts.schedules : fallback;
    SimulateOptions so;
    so.correct = opts.correct;
    so.threads = opts.sampler.threads;
    const auto ts = simulate(posterior, last, training.last_period(), pops, schedules, periods.back() + kPeriodLength,
                             opts.projection_seed, so);
    const auto summary = summarize(ts);
    std::vector<double> median;
    median.reserve(truth.size());
    for (const auto& q : summary.rows) median.push_back(q.median);
    report.rows.push_back({years, "bayes", mae(median, truth), coverage(ts, truth, 0.8), coverage(ts, truth, 0.95), cells});
  }
  if (opts.models.count("gravity")) {
    const auto fits = gravity_fit_panel(training, pops, training.period_starts().front(), training.last_period());
    std::map<std::string, std::size_t> fit_index;
    for (std::size_t i = 0; i < fits.size(); ++i) fit_index[fits[i].country_code] = i;
    const auto projected = gravity_project_rates(fits, pops, periods);
    std::vector<double> forecast(truth.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < codes.size(); ++c) {
      const auto f = fit_index.find(codes[c]);
      if (f == fit_index.end()) continue;
      for (std::size_t t = 0; t < periods.size(); ++t) {
        forecast[c * periods.size() + t] = projected[f->second * periods.size() + t];
      }
    }
    std::size_t scored = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) scored += (!is_missing(truth[i]) && !is_missing(forecast[i]));
    report.rows.push_back({years, "gravity", mae(forecast, truth), std::nullopt, std::nullopt, scored});
  }
  if (opts.models.count("persistence")) {
    const auto forecast = persistence_project(last, periods.size());
    report.rows.push_back({years, "persistence", mae(forecast, truth), std::nullopt, std::nullopt, cells});
  }
  return report;
}

}  // namespace migproj
