#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "migproj/panel.hpp"
#include "oracles.hpp"

using namespace migproj;

namespace {

const double NA = std::numeric_limits<double>::quiet_NaN();

std::filesystem::path write_tmp(const std::string& name, const std::string& body) {
  static const auto dir = oracle::temp_dir("panel");
  const auto p = dir / name;
  oracle::write(p, body);
  return p;
}

}  // namespace

TEST(RatePanel, LoadsTwoByTwo) {
  const auto p = write_tmp("r2.csv",
                           "country_code,period_start,rate\n"
                           "B,1955,-2.0\nA,1950,1.0\nB,1950,-1.0\nA,1955,2.0\n");
  const auto panel = load_rate_panel(p);
  ASSERT_EQ(panel.n_countries(), 2u);
  ASSERT_EQ(panel.n_periods(), 2u);
  EXPECT_EQ(panel.country_codes(), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(panel.period_starts(), (std::vector<int>{1950, 1955}));
  EXPECT_EQ(panel(0, 0), 1.0);
  EXPECT_EQ(panel(0, 1), 2.0);
  EXPECT_EQ(panel(1, 0), -1.0);
  EXPECT_EQ(panel(1, 1), -2.0);
}

TEST(RatePanel, DuplicateKeyRejected) {
  const auto p = write_tmp("dup.csv", "country_code,period_start,rate\nA,1950,1\nA,1950,2\n");
  EXPECT_THROW(load_rate_panel(p), ValidationError);
}

TEST(RatePanel, MalformedRowReportsLine) {
  const auto p = write_tmp("bad.csv", "country_code,period_start,rate\nA,1950,1\nA,1955,abc\n");
  try {
    load_rate_panel(p);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  const auto q = write_tmp("short.csv", "country_code,period_start,rate\nA,1950\n");
  EXPECT_THROW(load_rate_panel(q), ParseError);
  const auto h = write_tmp("hdr.csv", "code,period,rate\nA,1950,1\n");
  EXPECT_THROW(load_rate_panel(h), ParseError);
}

TEST(RatePanel, MissingFileIsIoError) { EXPECT_THROW(load_rate_panel("/nonexistent/x.csv"), IoError); }

TEST(RatePanel, NonUniformSpacingRejected) {
  const auto p = write_tmp("gap.csv", "country_code,period_start,rate\nA,1950,1\nA,1955,1\nA,1965,1\n");
  EXPECT_THROW(load_rate_panel(p), ValidationError);
  EXPECT_THROW(RatePanel({"A"}, {1950, 1956}, {1.0, 1.0}), ValidationError);
}

TEST(RatePanel, ShapeOf197By12) {
  std::string body = "country_code,period_start,rate\n";
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n(0, 5);
  for (int c = 0; c < 197; ++c) {
    for (int y = 1950; y <= 2005; y += 5) body += "C" + std::to_string(1000 + c) + "," + std::to_string(y) + "," + std::to_string(n(gen)) + "\n";
  }
  const auto panel = load_rate_panel(write_tmp("big.csv", body));
  EXPECT_EQ(panel.n_countries(), 197u);
  EXPECT_EQ(panel.n_periods(), 12u);
  EXPECT_EQ(panel.period_starts().front(), 1950);
  EXPECT_EQ(panel.last_period(), 2005);
}

TEST(RatePanel, LeadingMissingAllowedInteriorGapRejected) {
  const RatePanel ok({"A", "B"}, {1950, 1955, 1960}, {NA, 1.0, 2.0, 0.5, 0.6, 0.7});
  EXPECT_EQ(ok.n_observed(0), 2u);
  EXPECT_EQ(ok.n_observed(1), 3u);
  EXPECT_THROW(RatePanel({"A"}, {1950, 1955, 1960}, {1.0, NA, 2.0}), ValidationError);
  EXPECT_THROW(RatePanel({"A"}, {1950, 1955, 1960}, {1.0, 2.0, NA}), ValidationError);
  EXPECT_THROW(RatePanel({"A"}, {1950, 1955}, {NA, NA}), ValidationError);
  // Absent rows in the long file count as missing.
  const auto p = write_tmp("lead.csv", "country_code,period_start,rate\nA,1955,1\nA,1960,2\nB,1950,0\nB,1955,0\nB,1960,NA\n");
  EXPECT_THROW(load_rate_panel(p), ValidationError);
  const auto q = write_tmp("lead2.csv", "country_code,period_start,rate\nA,1955,1\nA,1960,2\nB,1950,0\nB,1955,0\nB,1960,1\n");
  const auto panel = load_rate_panel(q);
  EXPECT_TRUE(is_missing(panel(0, 0)));
}

TEST(RatePanel, DimensionAndDuplicateCodes) {
  EXPECT_THROW(RatePanel({"A"}, {1950, 1955}, {1.0}), DimensionError);
  EXPECT_THROW(RatePanel({"A", "A"}, {1950}, {1.0, 2.0}), ValidationError);
}

TEST(RatePanel, SliceAndFilter) {
  const RatePanel p({"A", "B"}, {1950, 1955, 1960, 1965}, {NA, NA, 1, 2, 1, 2, 3, 4});
  const auto head = p.slice_periods(0, 2);
  EXPECT_EQ(head.country_codes(), std::vector<std::string>{"B"});
  const auto tail = p.slice_periods(2, 2);
  EXPECT_EQ(tail.n_countries(), 2u);
  EXPECT_EQ(tail(1, 1), 4.0);
  EXPECT_EQ(p.with_min_observed(3).country_codes(), std::vector<std::string>{"B"});
  EXPECT_THROW(p.slice_periods(3, 2), DimensionError);
}

TEST(PopulationPanel, RejectsNonPositive) {
  EXPECT_THROW(PopulationPanel({"A"}, {1950}, {0.0}), ValidationError);
  EXPECT_THROW(PopulationPanel({"A"}, {1950}, {-1.0}), ValidationError);
  EXPECT_THROW(PopulationPanel({"A"}, {1950, 1955}, {1.0, NA}), ValidationError);
  const auto p = write_tmp("pneg.csv", "country_code,period_start,population\nA,1950,-3\n");
  EXPECT_THROW(load_population_panel(p), ValidationError);
  const auto q = write_tmp("pmiss.csv", "country_code,period_start,population\nA,1950,3\nB,1950,2\nA,1955,3\n");
  EXPECT_THROW(load_population_panel(q), ValidationError);
}

TEST(PopulationPanel, Lookup) {
  const PopulationPanel p({"A", "B"}, {1950, 1955}, {1, 2, 3, 4});
  EXPECT_EQ(p.at("B", 1955), 4.0);
  EXPECT_EQ(p.total(1950), 4.0);
  EXPECT_EQ(p.column({"B", "A"}, 1955), (std::vector<double>{4, 2}));
  EXPECT_THROW(p.at("C", 1950), ValidationError);
  EXPECT_THROW(p.at("A", 1960), ValidationError);
}

TEST(Counts, Examples) {
  const double r[] = {5.0};
  const double n[] = {2000.0};
  EXPECT_DOUBLE_EQ(counts_from_rates(r, n)[0], 10000.0);
  const double zero[] = {0.0, 0.0};
  const double pops[] = {1.0, 1e6};
  const auto c = counts_from_rates(zero, pops);
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_THROW(counts_from_rates(zero, n), DimensionError);
  EXPECT_THROW(rates_from_counts(zero, n), DimensionError);
}

TEST(Counts, RoundTripRandom) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> rate(0.0, 10.0);
  std::lognormal_distribution<double> pop(std::log(5000.0), 2.0);
  std::vector<double> r(1000), n(1000);
  for (int i = 0; i < 1000; ++i) {
    r[i] = rate(gen);
    n[i] = pop(gen);
  }
  const auto back = rates_from_counts(counts_from_rates(r, n), n);
  for (int i = 0; i < 1000; ++i) EXPECT_NEAR(back[i], r[i], 1e-12 * std::max(1.0, std::abs(r[i])));
}

TEST(Counts, LinearInRate) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(-20, 20), p(1, 1e5);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> r(5), n(5), ar(5);
    const double alpha = u(gen);
    for (int i = 0; i < 5; ++i) {
      r[i] = u(gen);
      n[i] = p(gen);
      ar[i] = alpha * r[i];
    }
    const auto base = counts_from_rates(r, n);
    const auto scaled = counts_from_rates(ar, n);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(scaled[i], alpha * base[i], 1e-12 * std::abs(alpha * base[i]) + 1e-12);
  }
}

TEST(Schedules, Examples) {
  const auto one = parse_schedules("country_code,age_group,sex,fraction\nA,all,both,1.0\n", "mem");
  EXPECT_EQ(one.n_cells(), 1u);
  EXPECT_EQ(one.at("A").fractions, std::vector<double>{1.0});

  const auto two = parse_schedules("country_code,age_group,sex,fraction\nA,0-19,F,0.6\nA,20+,F,0.4\n", "mem");
  EXPECT_EQ(two.n_cells(), 2u);
  EXPECT_DOUBLE_EQ(two.at("A").fractions[0], 0.6);

  EXPECT_THROW(parse_schedules("country_code,age_group,sex,fraction\nA,x,F,0.58\nA,y,F,0.4\n", "mem"), ValidationError);
  EXPECT_THROW(parse_schedules("country_code,age_group,sex,fraction\nA,x,F,1.2\nA,y,F,-0.2\n", "mem"), ValidationError);
}

TEST(Schedules, RenormalisesWithinTolerance) {
  const auto s = parse_schedules("country_code,age_group,sex,fraction\nA,x,F,0.6000004\nA,y,F,0.4\n", "mem");
  const auto& f = s.at("A").fractions;
  EXPECT_NEAR(f[0] + f[1], 1.0, 1e-15);
  EXPECT_NEAR(f[0], 0.6000004 / 1.0000004, 1e-15);
}

TEST(Schedules, CellsMustMatchAcrossCountries) {
  EXPECT_THROW(parse_schedules("country_code,age_group,sex,fraction\nA,x,F,0.5\nA,y,F,0.5\nB,x,F,1.0\n", "mem"),
               ValidationError);
  EXPECT_THROW(parse_schedules("country_code,age_group,sex,fraction\nA,x,F,0.5\nA,x,F,0.5\n", "mem"), ValidationError);
  EXPECT_THROW(ScheduleSet({{"x", "F"}}, {{"A", {0.9}}}), ValidationError);
}

TEST(Schedules, MissingCountryOnlyFailsAtUse) {
  const auto s = ScheduleSet::degenerate({"A"});
  EXPECT_EQ(s.find("B"), nullptr);
  EXPECT_THROW(s.at("B"), ValidationError);
}

TEST(RoundTrip, RatePopulationSchedule) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> n(0, 7);
  std::vector<double> rates;
  for (int i = 0; i < 3 * 4; ++i) rates.push_back(n(gen));
  rates[0] = NA;
  const RatePanel panel({"AAA", "BBB", "CCC"}, {1950, 1955, 1960, 1965}, rates);
  const auto rp = write_tmp("rt_rates.csv", to_csv(panel));
  const auto panel2 = load_rate_panel(rp);
  EXPECT_TRUE(panel == panel2);
  save_rate_panel(panel2, rp);
  EXPECT_TRUE(load_rate_panel(rp) == panel);

  std::vector<double> pv;
  for (int i = 0; i < 3 * 5; ++i) pv.push_back(std::exp(n(gen)));
  const PopulationPanel pops({"AAA", "BBB", "CCC"}, {1950, 1955, 1960, 1965, 1970}, pv);
  const auto pp = write_tmp("rt_pops.csv", to_csv(pops));
  EXPECT_TRUE(load_population_panel(pp) == pops);

  std::vector<MigrationSchedule> sch;
  for (const char* c : {"AAA", "BBB"}) {
    std::vector<double> w(4);
    double s = 0;
    for (auto& v : w) s += (v = std::abs(n(gen)));
    for (auto& v : w) v /= s;
    sch.push_back({c, w});
  }
  const ScheduleSet set({{"0-14", "F"}, {"0-14", "M"}, {"15+", "F"}, {"15+", "M"}}, sch);
  const auto sp = write_tmp("rt_sch.csv", to_csv(set));
  EXPECT_TRUE(load_schedules(sp) == set);
}

TEST(Csv, BomBlankLinesAndWhitespace) {
  const auto p = write_tmp("bom.csv", "\xEF\xBB\xBF" "country_code,period_start,rate\r\n A ,1950, 1.5 \r\n\r\nA,1955,2\r\n");
  const auto panel = load_rate_panel(p);
  EXPECT_EQ(panel.country_codes()[0], "A");
  EXPECT_EQ(panel(0, 0), 1.5);
}
