#pragma once

// Joint posterior-predictive simulation of net migration rates under the
// constraint of zero global net migration in every age/sex cell.
//
// Per future period and posterior draw:
//   1. one AR(1) step per country,
//   2. rates -> counts with projected populations,
//   3. counts -> age/sex cells with each country's frozen schedule,
//   4. per cell, subtract the global overflow in proportion to population,
//   5. cells -> corrected rates,
//   6. the corrected rates seed the next step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "migproj/csv.hpp"
#include "migproj/error.hpp"
#include "migproj/model.hpp"
#include "migproj/panel.hpp"
#include "migproj/rng.hpp"
#include "migproj/sampler.hpp"

namespace migproj {

/// Dense countries x age/sex-cells matrix, row-major.
struct CellMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  CellMatrix() = default;
  CellMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  friend bool operator==(const CellMatrix&, const CellMatrix&) = default;
};

/// One uncorrected AR(1) step: mu + phi (r - mu) + N(0, sigma2) per country.
inline std::vector<double> step_rates(const ModelState& state, std::span<const double> current, Rng& rng) {
  if (current.size() != state.countries.size()) {
    throw DimensionError("step_rates: " + std::to_string(current.size()) + " rates for " +
                         std::to_string(state.countries.size()) + " countries");
  }
  std::vector<double> next(current.size());
  for (std::size_t c = 0; c < current.size(); ++c) {
    const auto& p = state.countries[c];
    next[c] = p.mu + p.phi * (current[c] - p.mu) + std::sqrt(p.sigma2) * rng.normal();
  }
  return next;
}

/// Schedule fractions for `codes`, in that order.
inline CellMatrix schedule_matrix(const std::vector<std::string>& codes, const ScheduleSet& schedules) {
  CellMatrix m(codes.size(), schedules.n_cells());
  for (std::size_t c = 0; c < codes.size(); ++c) {
    const auto* s = schedules.find(codes[c]);
    if (!s) throw ValidationError("no migration schedule for country " + codes[c]);
    std::copy(s->fractions.begin(), s->fractions.end(), m.data.begin() + static_cast<std::ptrdiff_t>(c * m.cols));
  }
  return m;
}

inline CellMatrix disaggregate(std::span<const double> counts, const CellMatrix& fractions) {
  if (counts.size() != fractions.rows) {
    throw DimensionError("disaggregate: " + std::to_string(counts.size()) + " counts for " +
                         std::to_string(fractions.rows) + " schedules");
  }
  CellMatrix out(fractions.rows, fractions.cols);
  for (std::size_t c = 0; c < out.rows; ++c) {
    for (std::size_t k = 0; k < out.cols; ++k) out(c, k) = counts[c] * fractions(c, k);
  }
  return out;
}

inline CellMatrix disaggregate(std::span<const double> counts, const std::vector<std::string>& codes,
                               const ScheduleSet& schedules) {
  return disaggregate(counts, schedule_matrix(codes, schedules));
}

/// y*[c,k] = y[c,k] - n[c] / sum_j n[j] * sum_j y[j,k], independently per cell k.
inline CellMatrix zero_sum_correct(const CellMatrix& counts, std::span<const double> populations) {
  if (populations.size() != counts.rows) {
    throw DimensionError("zero_sum_correct: " + std::to_string(populations.size()) + " populations for " +
                         std::to_string(counts.rows) + " countries");
  }
  long double total_pop = 0.0L;
  for (const double n : populations) total_pop += n;
  CellMatrix out = counts;
  for (std::size_t k = 0; k < counts.cols; ++k) {
    long double overflow = 0.0L;
    for (std::size_t c = 0; c < counts.rows; ++c) overflow += counts(c, k);
    const long double per_person = overflow / total_pop;
    for (std::size_t c = 0; c < counts.rows; ++c) {
      out(c, k) = static_cast<double>(counts(c, k) - per_person * populations[c]);
    }
  }
  return out;
}

/// Rates per thousand from cell counts (persons) and populations (thousands).
inline std::vector<double> reaggregate(const CellMatrix& counts, std::span<const double> populations) {
  if (populations.size() != counts.rows) {
    throw DimensionError("reaggregate: " + std::to_string(populations.size()) + " populations for " +
                         std::to_string(counts.rows) + " countries");
  }
  std::vector<double> rates(counts.rows);
  for (std::size_t c = 0; c < counts.rows; ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < counts.cols; ++k) s += counts(c, k);
    rates[c] = s / populations[c];
  }
  return rates;
}

/// Simulated rate paths: draws x countries x future periods.
struct TrajectorySet {
  std::vector<std::string> country_codes;
  std::vector<int> period_starts;
  std::size_t n_draws = 0;
  std::vector<double> rates;

  // Corrected age/sex counts, draws x periods x countries x cells; filled
  // only when requested.
  std::vector<ScheduleCell> cells;
  std::vector<double> cell_counts;

  std::size_t n_countries() const { return country_codes.size(); }
  std::size_t n_periods() const { return period_starts.size(); }

  double rate(std::size_t draw, std::size_t c, std::size_t t) const {
    return rates[(draw * n_countries() + c) * n_periods() + t];
  }
  double& rate(std::size_t draw, std::size_t c, std::size_t t) {
    return rates[(draw * n_countries() + c) * n_periods() + t];
  }

  /// All draws for one (country, period) cell.
  std::vector<double> cell_draws(std::size_t c, std::size_t t) const {
    std::vector<double> v(n_draws);
    for (std::size_t k = 0; k < n_draws; ++k) v[k] = rate(k, c, t);
    return v;
  }

  double cell_count(std::size_t draw, std::size_t t, std::size_t c, std::size_t k) const {
    return cell_counts[((draw * n_periods() + t) * n_countries() + c) * cells.size() + k];
  }

  friend bool operator==(const TrajectorySet&, const TrajectorySet&) = default;
};

struct SimulateOptions {
  bool correct = true;            // apply the zero-sum correction
  bool keep_cell_counts = false;  // retain corrected age/sex counts for every period
  std::size_t threads = 1;
};

/// Start years of the future periods after `last_period` that end by
/// `horizon` (a period starting at p covers [p, p + 5)). A 2100 horizon after
/// a 2005-10 last period gives 2010, ..., 2095.
inline std::vector<int> future_periods(int last_period, int horizon) {
  std::vector<int> out;
  for (int p = last_period + kPeriodLength; p + kPeriodLength <= horizon; p += kPeriodLength) out.push_back(p);
  return out;
}

/// One trajectory per posterior draw, seeded from substream (seed, draw index).
inline TrajectorySet simulate(const PosteriorSample& posterior, std::span<const double> last_rates, int last_period,
                              const PopulationPanel& populations, const ScheduleSet& schedules, int horizon,
                              std::uint64_t seed, const SimulateOptions& opts = {}) {
  const auto& codes = posterior.country_codes;
  const std::size_t C = codes.size();
  if (last_rates.size() != C) {
    throw DimensionError("simulate: " + std::to_string(last_rates.size()) + " last rates for " + std::to_string(C) +
                         " countries");
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (!std::isfinite(last_rates[c])) throw ValidationError("simulate: no last observed rate for " + codes[c]);
  }
  if (horizon < last_period) throw ValidationError("simulate: horizon precedes the last observed period");

  TrajectorySet ts;
  ts.country_codes = codes;
  ts.period_starts = future_periods(last_period, horizon);
  ts.n_draws = posterior.draws.size();
  const std::size_t P = ts.n_periods();
  ts.rates.assign(ts.n_draws * C * P, 0.0);

  const CellMatrix fractions = schedule_matrix(codes, schedules);
  const std::size_t K = fractions.cols;
  if (opts.keep_cell_counts) {
    ts.cells = schedules.cells();
    ts.cell_counts.assign(ts.n_draws * P * C * K, 0.0);
  }

  std::vector<std::vector<double>> pops(P);
  for (std::size_t t = 0; t < P; ++t) {
    for (const auto& code : codes) {
      const auto ci = populations.country_index(code);
      if (!ci) throw ValidationError("simulate: no population projection for " + code);
      const auto ti = populations.period_index(ts.period_starts[t]);
      if (!ti) {
        throw ValidationError("simulate: population projections end before " + std::to_string(ts.period_starts[t]));
      }
      pops[t].push_back(populations(*ci, *ti));
    }
  }

  auto run_draw = [&](std::size_t k) {
    Rng rng = Rng::substream(seed, k);
    const auto& state = posterior.draws[k].state;
    if (state.countries.size() != C) throw DimensionError("simulate: posterior draw has the wrong country count");
    std::vector<double> current(last_rates.begin(), last_rates.end());
    for (std::size_t t = 0; t < P; ++t) {
      const auto next = step_rates(state, current, rng);
      const auto counts = counts_from_rates(next, pops[t]);
      auto cells = disaggregate(counts, fractions);
      if (opts.correct) cells = zero_sum_correct(cells, pops[t]);
      current = reaggregate(cells, pops[t]);
      for (std::size_t c = 0; c < C; ++c) ts.rate(k, c, t) = current[c];
      if (opts.keep_cell_counts) {
        std::copy(cells.data.begin(), cells.data.end(),
                  ts.cell_counts.begin() + static_cast<std::ptrdiff_t>((k * P + t) * C * K));
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(opts.threads, 1, std::max<std::size_t>(ts.n_draws, 1));
  if (workers == 1) {
    for (std::size_t k = 0; k < ts.n_draws; ++k) run_draw(k);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex m;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = w; k < ts.n_draws; k += workers) run_draw(k);
        } catch (...) {
          std::lock_guard lock(m);
          if (!error) error = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }
  return ts;
}

/// Largest |sum_c count| / sum_c |count| over every (draw, period, cell).
/// Requires cell counts retained by `simulate`.
inline double max_zero_sum_violation(const TrajectorySet& ts) {
  if (ts.cell_counts.empty() && ts.n_draws * ts.n_periods() > 0) {
    throw ValidationError("trajectory set holds no age/sex counts");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < ts.n_draws; ++k) {
    for (std::size_t t = 0; t < ts.n_periods(); ++t) {
      for (std::size_t cell = 0; cell < ts.cells.size(); ++cell) {
        double sum = 0.0, abs_sum = 0.0;
        for (std::size_t c = 0; c < ts.n_countries(); ++c) {
          const double y = ts.cell_count(k, t, c, cell);
          sum += y;
          abs_sum += std::abs(y);
        }
        if (abs_sum > 0.0) worst = std::max(worst, std::abs(sum) / abs_sum);
      }
    }
  }
  return worst;
}

// --- Quantile summaries ------------------------------------------------------

/// Linear interpolation between order statistics: h = (n - 1) p, value
/// x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]). Input must be sorted.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

struct QuantileRow {
  double median = 0.0;
  double p10 = 0.0;
  double p90 = 0.0;
  double p2_5 = 0.0;
  double p97_5 = 0.0;
};

struct QuantileSummary {
  std::vector<std::string> country_codes;
  std::vector<int> period_starts;
  std::vector<QuantileRow> rows;  // country-major

  const QuantileRow& at(std::size_t c, std::size_t t) const { return rows[c * period_starts.size() + t]; }
};

inline QuantileSummary summarize(const TrajectorySet& ts) {
  QuantileSummary out{ts.country_codes, ts.period_starts, {}};
  if (ts.n_draws == 0) {
    if (ts.n_periods() > 0) throw ValidationError("summarize: trajectory set has no draws");
    return out;
  }
  out.rows.reserve(ts.n_countries() * ts.n_periods());
  for (std::size_t c = 0; c < ts.n_countries(); ++c) {
    for (std::size_t t = 0; t < ts.n_periods(); ++t) {
      auto v = ts.cell_draws(c, t);
      std::sort(v.begin(), v.end());
      out.rows.push_back({quantile_sorted(v, 0.5), quantile_sorted(v, 0.1), quantile_sorted(v, 0.9),
                          quantile_sorted(v, 0.025), quantile_sorted(v, 0.975)});
    }
  }
  return out;
}

// --- CSV ---------------------------------------------------------------------

inline std::string trajectories_to_csv(const TrajectorySet& ts) {
  std::string out = "draw,country_code,period_start,rate\n";
  out.reserve(out.size() + ts.rates.size() * 32);
  for (std::size_t k = 0; k < ts.n_draws; ++k) {
    const std::string draw = std::to_string(k) + ',';
    for (std::size_t c = 0; c < ts.n_countries(); ++c) {
      for (std::size_t t = 0; t < ts.n_periods(); ++t) {
        out += draw;
        out += ts.country_codes[c];
        out += ',';
        out += std::to_string(ts.period_starts[t]);
        out += ',';
        csv::append_double(out, ts.rate(k, c, t));
        out += '\n';
      }
    }
  }
  return out;
}

inline void save_trajectories(const TrajectorySet& ts, const std::filesystem::path& path) {
  csv::write_file_atomic(path, trajectories_to_csv(ts));
}

/// Reads `draw,country_code,period_start,rate`; the set must be complete.
inline TrajectorySet load_trajectories(const std::filesystem::path& path) {
  const std::string source = path.string();
  const auto rows = csv::read(path, {"draw", "country_code", "period_start", "rate"});
  std::map<std::string, std::size_t> cidx;
  std::map<int, std::size_t> pidx;
  std::size_t max_draw = 0;
  for (const auto& r : rows) {
    cidx.emplace(r.fields[1], 0);
    pidx.emplace(csv::to_int(r.fields[2], source, r.line), 0);
    max_draw = std::max<std::size_t>(max_draw, static_cast<std::size_t>(csv::to_int(r.fields[0], source, r.line)));
  }
  TrajectorySet ts;
  for (auto& [code, i] : cidx) {
    i = ts.country_codes.size();
    ts.country_codes.push_back(code);
  }
  for (auto& [p, i] : pidx) {
    i = ts.period_starts.size();
    ts.period_starts.push_back(p);
  }
  ts.n_draws = rows.empty() ? 0 : max_draw + 1;
  const std::size_t total = ts.n_draws * ts.n_countries() * ts.n_periods();
  if (rows.size() != total) throw ValidationError(source + ": incomplete trajectory set");
  ts.rates.assign(total, std::numeric_limits<double>::quiet_NaN());
  for (const auto& r : rows) {
    const auto k = static_cast<std::size_t>(csv::to_int(r.fields[0], source, r.line));
    double& slot = ts.rate(k, cidx[r.fields[1]], pidx[csv::to_int(r.fields[2], source, r.line)]);
    if (!std::isnan(slot)) throw ValidationError(source + ":" + std::to_string(r.line) + ": duplicate trajectory cell");
    slot = csv::to_double(r.fields[3], source, r.line, false);
  }
  return ts;
}

inline std::string summary_to_csv(const QuantileSummary& s) {
  std::string out = "country_code,period_start,median,p10,p90,p2_5,p97_5\n";
  for (std::size_t c = 0; c < s.country_codes.size(); ++c) {
    for (std::size_t t = 0; t < s.period_starts.size(); ++t) {
      const auto& q = s.at(c, t);
      out += s.country_codes[c] + ',' + std::to_string(s.period_starts[t]);
      for (const double v : {q.median, q.p10, q.p90, q.p2_5, q.p97_5}) {
        out += ',';
        csv::append_double(out, v);
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace migproj
