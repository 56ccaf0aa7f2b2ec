#pragma once

// Rate, population and migration-schedule panels plus their CSV formats.
//
// Units: rates are net migrants per thousand population per year; populations
// are thousands of persons; counts are net migrants (persons) per year.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "migproj/csv.hpp"
#include "migproj/error.hpp"

namespace migproj {

inline constexpr int kPeriodLength = 5;

inline bool is_missing(double v) { return std::isnan(v); }

namespace detail {

inline void check_period_axis(const std::vector<int>& periods, const std::string& what) {
  for (std::size_t i = 1; i < periods.size(); ++i) {
    if (periods[i] - periods[i - 1] != kPeriodLength) {
      throw ValidationError(what + ": period starts must be ascending with uniform " +
                            std::to_string(kPeriodLength) + "-year spacing (" + std::to_string(periods[i - 1]) +
                            " -> " + std::to_string(periods[i]) + ")");
    }
  }
}

inline void check_unique_codes(const std::vector<std::string>& codes, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& c : codes) {
    if (c.empty()) throw ValidationError(what + ": empty country code");
    if (!seen.insert(c).second) throw ValidationError(what + ": duplicate country code " + c);
  }
}

inline std::optional<std::size_t> index_of(const std::vector<std::string>& codes, const std::string& code) {
  const auto it = std::find(codes.begin(), codes.end(), code);
  if (it == codes.end()) return std::nullopt;
  return static_cast<std::size_t>(it - codes.begin());
}

}  // namespace detail

/// Countries x five-year periods of net migration rates. Missing cells are
/// NaN and may only appear as a leading run in a row: each country is
/// observed on a contiguous suffix ending at the last period.
class RatePanel {
 public:
  RatePanel() = default;

  RatePanel(std::vector<std::string> country_codes, std::vector<int> period_starts, std::vector<double> rates)
      : codes_(std::move(country_codes)), periods_(std::move(period_starts)), rates_(std::move(rates)) {
    if (rates_.size() != codes_.size() * periods_.size()) {
      throw DimensionError("rate panel: expected " + std::to_string(codes_.size() * periods_.size()) +
                           " cells, got " + std::to_string(rates_.size()));
    }
    detail::check_unique_codes(codes_, "rate panel");
    detail::check_period_axis(periods_, "rate panel");
    for (std::size_t c = 0; c < codes_.size(); ++c) {
      const auto r = row(c);
      std::size_t t = 0;
      while (t < r.size() && is_missing(r[t])) ++t;
      if (t == r.size() && !r.empty()) throw ValidationError("rate panel: country " + codes_[c] + " has no observations");
      for (; t < r.size(); ++t) {
        if (is_missing(r[t])) {
          throw ValidationError("rate panel: country " + codes_[c] + " has a gap at " + std::to_string(periods_[t]) +
                                "; only leading periods may be missing");
        }
        if (!std::isfinite(r[t])) throw ValidationError("rate panel: non-finite rate for " + codes_[c]);
      }
    }
  }

  std::size_t n_countries() const noexcept { return codes_.size(); }
  std::size_t n_periods() const noexcept { return periods_.size(); }
  const std::vector<std::string>& country_codes() const noexcept { return codes_; }
  const std::vector<int>& period_starts() const noexcept { return periods_; }
  const std::vector<double>& values() const noexcept { return rates_; }

  double operator()(std::size_t c, std::size_t t) const { return rates_[c * periods_.size() + t]; }

  std::span<const double> row(std::size_t c) const {
    return std::span<const double>(rates_).subspan(c * periods_.size(), periods_.size());
  }

  std::optional<std::size_t> country_index(const std::string& code) const { return detail::index_of(codes_, code); }

  std::optional<std::size_t> period_index(int start) const {
    const auto it = std::find(periods_.begin(), periods_.end(), start);
    if (it == periods_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - periods_.begin());
  }

  std::size_t n_observed(std::size_t c) const {
    const auto r = row(c);
    return static_cast<std::size_t>(std::count_if(r.begin(), r.end(), [](double v) { return !is_missing(v); }));
  }

  int last_period() const {
    if (periods_.empty()) throw ValidationError("rate panel has no periods");
    return periods_.back();
  }

  /// Rates in the final period, one per country.
  std::vector<double> last_rates() const {
    std::vector<double> out(codes_.size());
    for (std::size_t c = 0; c < codes_.size(); ++c) out[c] = (*this)(c, periods_.size() - 1);
    return out;
  }

  /// Contiguous period window [first, first + count).
  RatePanel slice_periods(std::size_t first, std::size_t count) const {
    if (first + count > periods_.size()) throw DimensionError("rate panel: period slice out of range");
    std::vector<int> p(periods_.begin() + static_cast<std::ptrdiff_t>(first),
                       periods_.begin() + static_cast<std::ptrdiff_t>(first + count));
    std::vector<std::string> codes;
    std::vector<double> v;
    for (std::size_t c = 0; c < codes_.size(); ++c) {
      const auto r = row(c).subspan(first, count);
      if (std::all_of(r.begin(), r.end(), is_missing)) continue;
      codes.push_back(codes_[c]);
      v.insert(v.end(), r.begin(), r.end());
    }
    return RatePanel(std::move(codes), std::move(p), std::move(v));
  }

  RatePanel select_countries(const std::vector<std::size_t>& indices) const {
    std::vector<std::string> codes;
    std::vector<double> v;
    for (const auto c : indices) {
      codes.push_back(codes_.at(c));
      const auto r = row(c);
      v.insert(v.end(), r.begin(), r.end());
    }
    return RatePanel(std::move(codes), periods_, std::move(v));
  }

  /// Drops countries with fewer than `min_observed` observed periods.
  RatePanel with_min_observed(std::size_t min_observed) const {
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < codes_.size(); ++c) {
      if (n_observed(c) >= min_observed) keep.push_back(c);
    }
    return select_countries(keep);
  }

  friend bool operator==(const RatePanel& x, const RatePanel& y) {
    if (x.codes_ != y.codes_ || x.periods_ != y.periods_ || x.rates_.size() != y.rates_.size()) return false;
    for (std::size_t i = 0; i < x.rates_.size(); ++i) {
      const bool mx = is_missing(x.rates_[i]), my = is_missing(y.rates_[i]);
      if (mx != my || (!mx && x.rates_[i] != y.rates_[i])) return false;
    }
    return true;
  }

 private:
  std::vector<std::string> codes_;
  std::vector<int> periods_;
  std::vector<double> rates_;
};

/// Period-average populations in thousands, complete over its axes. The
/// period axis usually extends past the rate panel into projected years.
class PopulationPanel {
 public:
  PopulationPanel() = default;

  PopulationPanel(std::vector<std::string> country_codes, std::vector<int> period_starts, std::vector<double> values)
      : codes_(std::move(country_codes)), periods_(std::move(period_starts)), values_(std::move(values)) {
    if (values_.size() != codes_.size() * periods_.size()) {
      throw DimensionError("population panel: expected " + std::to_string(codes_.size() * periods_.size()) +
                           " cells, got " + std::to_string(values_.size()));
    }
    detail::check_unique_codes(codes_, "population panel");
    detail::check_period_axis(periods_, "population panel");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!(values_[i] > 0.0) || !std::isfinite(values_[i])) {
        throw ValidationError("population panel: population must be finite and > 0 for " +
                              codes_[i / periods_.size()] + " in " + std::to_string(periods_[i % periods_.size()]));
      }
    }
  }

  std::size_t n_countries() const noexcept { return codes_.size(); }
  std::size_t n_periods() const noexcept { return periods_.size(); }
  const std::vector<std::string>& country_codes() const noexcept { return codes_; }
  const std::vector<int>& period_starts() const noexcept { return periods_; }
  const std::vector<double>& values() const noexcept { return values_; }

  double operator()(std::size_t c, std::size_t t) const { return values_[c * periods_.size() + t]; }

  std::optional<std::size_t> country_index(const std::string& code) const { return detail::index_of(codes_, code); }

  std::optional<std::size_t> period_index(int start) const {
    const auto it = std::find(periods_.begin(), periods_.end(), start);
    if (it == periods_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - periods_.begin());
  }

  double at(const std::string& code, int period) const {
    const auto c = country_index(code);
    if (!c) throw ValidationError("population panel has no country " + code);
    const auto t = period_index(period);
    if (!t) throw ValidationError("population panel has no period " + std::to_string(period) + " for " + code);
    return (*this)(*c, *t);
  }

  /// Populations of `codes` (in that order) for one period.
  std::vector<double> column(const std::vector<std::string>& codes, int period) const {
    std::vector<double> out;
    out.reserve(codes.size());
    for (const auto& code : codes) out.push_back(at(code, period));
    return out;
  }

  /// Sum over every country in the panel for one period.
  double total(int period) const {
    const auto t = period_index(period);
    if (!t) throw ValidationError("population panel has no period " + std::to_string(period));
    double s = 0.0;
    for (std::size_t c = 0; c < codes_.size(); ++c) s += (*this)(c, *t);
    return s;
  }

  friend bool operator==(const PopulationPanel&, const PopulationPanel&) = default;

 private:
  std::vector<std::string> codes_;
  std::vector<int> periods_;
  std::vector<double> values_;
};

struct ScheduleCell {
  std::string age_group;
  std::string sex;
  friend bool operator==(const ScheduleCell&, const ScheduleCell&) = default;
};

/// Fractions of a country's net migrants per (age group, sex) cell. The cell
/// axis is owned by the enclosing ScheduleSet.
struct MigrationSchedule {
  std::string country_code;
  std::vector<double> fractions;
  friend bool operator==(const MigrationSchedule&, const MigrationSchedule&) = default;
};

/// Schedules for many countries over one shared cell axis.
class ScheduleSet {
 public:
  ScheduleSet() = default;

  ScheduleSet(std::vector<ScheduleCell> cells, std::vector<MigrationSchedule> schedules)
      : cells_(std::move(cells)), schedules_(std::move(schedules)) {
    if (cells_.empty()) throw ValidationError("schedule set has no cells");
    std::set<std::string> seen;
    for (const auto& s : schedules_) {
      if (!seen.insert(s.country_code).second) throw ValidationError("duplicate schedule for " + s.country_code);
      if (s.fractions.size() != cells_.size()) {
        throw DimensionError("schedule for " + s.country_code + " has " + std::to_string(s.fractions.size()) +
                             " cells, expected " + std::to_string(cells_.size()));
      }
      double sum = 0.0;
      for (const double f : s.fractions) {
        if (!(f >= 0.0) || !std::isfinite(f)) throw ValidationError("negative or non-finite fraction for " + s.country_code);
        sum += f;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("schedule fractions for " + s.country_code + " sum to " + csv::format_double(sum));
      }
    }
  }

  /// Every listed country gets the single merged cell with fraction 1.
  static ScheduleSet degenerate(const std::vector<std::string>& codes) {
    std::vector<MigrationSchedule> s;
    for (const auto& c : codes) s.push_back({c, {1.0}});
    return ScheduleSet({{"all", "both"}}, std::move(s));
  }

  const std::vector<ScheduleCell>& cells() const noexcept { return cells_; }
  const std::vector<MigrationSchedule>& schedules() const noexcept { return schedules_; }
  std::size_t n_cells() const noexcept { return cells_.size(); }

  const MigrationSchedule* find(const std::string& code) const {
    for (const auto& s : schedules_) {
      if (s.country_code == code) return &s;
    }
    return nullptr;
  }

  const MigrationSchedule& at(const std::string& code) const {
    if (const auto* s = find(code)) return *s;
    throw ValidationError("no migration schedule for country " + code);
  }

  friend bool operator==(const ScheduleSet&, const ScheduleSet&) = default;

 private:
  std::vector<ScheduleCell> cells_;
  std::vector<MigrationSchedule> schedules_;
};

// --- Count/rate conversion -------------------------------------------------

/// Net annual migrants from rates per thousand and populations in thousands.
inline std::vector<double> counts_from_rates(std::span<const double> rates, std::span<const double> populations) {
  if (rates.size() != populations.size()) {
    throw DimensionError("counts_from_rates: " + std::to_string(rates.size()) + " rates vs " +
                         std::to_string(populations.size()) + " populations");
  }
  std::vector<double> out(rates.size());
  for (std::size_t i = 0; i < rates.size(); ++i) out[i] = rates[i] * populations[i];
  return out;
}

inline std::vector<double> rates_from_counts(std::span<const double> counts, std::span<const double> populations) {
  if (counts.size() != populations.size()) {
    throw DimensionError("rates_from_counts: " + std::to_string(counts.size()) + " counts vs " +
                         std::to_string(populations.size()) + " populations");
  }
  std::vector<double> out(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = counts[i] / populations[i];
  return out;
}

// --- CSV I/O ----------------------------------------------------------------

namespace detail {

struct LongPanel {
  std::vector<std::string> codes;
  std::vector<int> periods;
  std::vector<double> values;  // NaN where no row was supplied
};

inline LongPanel read_long_panel(const std::filesystem::path& path, const std::string& value_column,
                                 bool allow_missing) {
  const std::string source = path.string();
  const auto rows = csv::read(path, {"country_code", "period_start", value_column});
  std::map<std::pair<std::string, int>, double> cells;
  std::set<std::string> codes;
  std::set<int> periods;
  for (const auto& row : rows) {
    const auto& code = row.fields[0];
    if (code.empty()) throw ParseError(source, row.line, "empty country_code");
    const int period = csv::to_int(row.fields[1], source, row.line);
    const double v = csv::to_double(row.fields[2], source, row.line, allow_missing);
    if (!cells.emplace(std::make_pair(code, period), v).second) {
      throw ValidationError(source + ":" + std::to_string(row.line) + ": duplicate key (" + code + ", " +
                            std::to_string(period) + ")");
    }
    codes.insert(code);
    periods.insert(period);
  }
  LongPanel out;
  out.codes.assign(codes.begin(), codes.end());
  out.periods.assign(periods.begin(), periods.end());
  out.values.reserve(out.codes.size() * out.periods.size());
  for (const auto& c : out.codes) {
    for (const int p : out.periods) {
      const auto it = cells.find({c, p});
      out.values.push_back(it == cells.end() ? std::numeric_limits<double>::quiet_NaN() : it->second);
    }
  }
  return out;
}

inline std::string write_long_panel(const std::vector<std::string>& codes, const std::vector<int>& periods,
                                    const std::vector<double>& values, const std::string& value_column) {
  std::string out = "country_code,period_start," + value_column + "\n";
  for (std::size_t c = 0; c < codes.size(); ++c) {
    for (std::size_t t = 0; t < periods.size(); ++t) {
      out += codes[c];
      out += ',';
      out += std::to_string(periods[t]);
      out += ',';
      csv::append_double(out, values[c * periods.size() + t]);
      out += '\n';
    }
  }
  return out;
}

}  // namespace detail

/// Reads `country_code,period_start,rate`. Absent rows and `NA` values are
/// missing cells. Countries and periods come back sorted.
inline RatePanel load_rate_panel(const std::filesystem::path& path) {
  auto p = detail::read_long_panel(path, "rate", true);
  try {
    return RatePanel(std::move(p.codes), std::move(p.periods), std::move(p.values));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline std::string to_csv(const RatePanel& panel) {
  return detail::write_long_panel(panel.country_codes(), panel.period_starts(), panel.values(), "rate");
}

inline void save_rate_panel(const RatePanel& panel, const std::filesystem::path& path) {
  csv::write_file_atomic(path, to_csv(panel));
}

/// Reads `country_code,period_start,population` (thousands). Must be complete.
inline PopulationPanel load_population_panel(const std::filesystem::path& path) {
  auto p = detail::read_long_panel(path, "population", false);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    if (is_missing(p.values[i])) {
      throw ValidationError(path.string() + ": no population for " + p.codes[i / p.periods.size()] + " in " +
                            std::to_string(p.periods[i % p.periods.size()]));
    }
  }
  try {
    return PopulationPanel(std::move(p.codes), std::move(p.periods), std::move(p.values));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline std::string to_csv(const PopulationPanel& panel) {
  return detail::write_long_panel(panel.country_codes(), panel.period_starts(), panel.values(), "population");
}

inline void save_population_panel(const PopulationPanel& panel, const std::filesystem::path& path) {
  csv::write_file_atomic(path, to_csv(panel));
}

/// Reads `country_code,age_group,sex,fraction`. Each country's fractions are
/// renormalised to sum to one when the raw sum is within 1e-6 of one.
inline ScheduleSet parse_schedules(std::string_view text, const std::string& source) {
  constexpr double kSumTolerance = 1e-6;
  const auto rows = csv::parse(text, {"country_code", "age_group", "sex", "fraction"}, source);
  std::vector<ScheduleCell> cells;
  std::vector<std::string> order;
  std::map<std::string, std::map<std::size_t, double>> by_country;
  std::map<std::string, std::size_t> first_line;
  for (const auto& row : rows) {
    const auto& code = row.fields[0];
    if (code.empty()) throw ParseError(source, row.line, "empty country_code");
    const ScheduleCell cell{row.fields[1], row.fields[2]};
    const double f = csv::to_double(row.fields[3], source, row.line, false);
    if (f < 0.0) {
      throw ValidationError(source + ":" + std::to_string(row.line) + ": negative fraction for " + code);
    }
    auto it = std::find(cells.begin(), cells.end(), cell);
    if (it == cells.end()) {
      cells.push_back(cell);
      it = cells.end() - 1;
    }
    const auto k = static_cast<std::size_t>(it - cells.begin());
    if (!by_country.count(code)) {
      order.push_back(code);
      first_line[code] = row.line;
    }
    if (!by_country[code].emplace(k, f).second) {
      throw ValidationError(source + ":" + std::to_string(row.line) + ": duplicate cell (" + cell.age_group + ", " +
                            cell.sex + ") for " + code);
    }
  }
  std::sort(order.begin(), order.end());
  std::vector<MigrationSchedule> schedules;
  for (const auto& code : order) {
    const auto& m = by_country[code];
    if (m.size() != cells.size()) {
      throw ValidationError(source + ": schedule for " + code + " covers " + std::to_string(m.size()) + " of " +
                            std::to_string(cells.size()) + " age/sex cells");
    }
    MigrationSchedule s{code, std::vector<double>(cells.size())};
    double sum = 0.0;
    for (const auto& [k, f] : m) {
      s.fractions[k] = f;
      sum += f;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw ValidationError(source + ": schedule fractions for " + code + " sum to " + csv::format_double(sum));
    }
    // Already-normalised input is kept bit-exact so save/load round-trips.
    if (std::abs(sum - 1.0) > 1e-12) {
      for (auto& f : s.fractions) f /= sum;
    }
    schedules.push_back(std::move(s));
  }
  if (cells.empty()) throw ValidationError(source + ": no schedule rows");
  return ScheduleSet(std::move(cells), std::move(schedules));
}

inline ScheduleSet load_schedules(const std::filesystem::path& path) {
  return parse_schedules(csv::read_file(path), path.string());
}

inline std::string to_csv(const ScheduleSet& set) {
  std::string out = "country_code,age_group,sex,fraction\n";
  for (const auto& s : set.schedules()) {
    for (std::size_t k = 0; k < set.n_cells(); ++k) {
      out += s.country_code + ',' + set.cells()[k].age_group + ',' + set.cells()[k].sex + ',';
      csv::append_double(out, s.fractions[k]);
      out += '\n';
    }
  }
  return out;
}

inline void save_schedules(const ScheduleSet& set, const std::filesystem::path& path) {
  csv::write_file_atomic(path, to_csv(set));
}

}  // namespace migproj
