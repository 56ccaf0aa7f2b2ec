#include <gtest/gtest.h>

#include <random>

#include "migproj/diagnostics.hpp"

using namespace migproj;

namespace {

ChainSeries iid_chains(std::size_t m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  ChainSeries c(m, std::vector<double>(n));
  for (auto& chain : c) {
    for (auto& x : chain) x = z(g);
  }
  return c;
}

ChainSeries ar1_chains(std::size_t m, std::size_t n, double rho, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  ChainSeries c(m, std::vector<double>(n));
  const double sd = std::sqrt(1 - rho * rho);
  for (auto& chain : c) {
    double x = z(g);
    for (auto& v : chain) {
      x = rho * x + sd * z(g);
      v = x;
    }
  }
  return c;
}

}  // namespace

TEST(Rhat, IidChainsNearOne) {
  const auto c = iid_chains(4, 5000, 1);
  const double r = split_rhat(c);
  EXPECT_GE(r, 0.99);
  EXPECT_LE(r, 1.01);
}

TEST(Rhat, ShiftedChainDiverges) {
  auto c = iid_chains(4, 5000, 2);
  for (auto& x : c[0]) x += 10.0;
  EXPECT_GT(split_rhat(c), 1.5);
}

TEST(Rhat, DetectsWithinChainDrift) {
  // A single trending chain is caught by the split.
  std::vector<double> trend(2000);
  for (std::size_t i = 0; i < trend.size(); ++i) trend[i] = static_cast<double>(i) / 100.0;
  EXPECT_GT(split_rhat({trend}), 1.5);
}

TEST(Ess, Ar1HalfAutocorrelation) {
  const auto c = ar1_chains(4, 10000, 0.5, 3);
  const double ratio = effective_sample_size(c) / 40000.0;
  EXPECT_GE(ratio, 0.28);
  EXPECT_LE(ratio, 0.39);
}

TEST(Ess, IidNearN) {
  const auto c = iid_chains(4, 5000, 4);
  const double ratio = effective_sample_size(c) / 20000.0;
  EXPECT_GT(ratio, 0.85);
  EXPECT_LT(ratio, 1.2);
}

TEST(Ess, StrongAutocorrelation) {
  const auto c = ar1_chains(4, 20000, 0.9, 5);
  const double ratio = effective_sample_size(c) / 80000.0;
  EXPECT_NEAR(ratio, 1.0 / 19.0, 0.015);
}

TEST(Diagnostics, InputValidation) {
  EXPECT_THROW(split_rhat({}), ValidationError);
  EXPECT_THROW(split_rhat({{1, 2, 3, 4}, {1, 2, 3}}), DimensionError);
  EXPECT_THROW(effective_sample_size({{1, 2}}), ValidationError);
}

TEST(Diagnostics, ConstantChains) {
  EXPECT_EQ(split_rhat({{1, 1, 1, 1}, {1, 1, 1, 1}}), 1.0);
  EXPECT_EQ(effective_sample_size({{1, 1, 1, 1}, {1, 1, 1, 1}}), 8.0);
}

TEST(Diagnostics, NamesAndValuesAlign) {
  const auto names = parameter_names({"AAA", "BBB"});
  ASSERT_EQ(names.size(), 10u);
  EXPECT_EQ(names[0], "mu[AAA]");
  EXPECT_EQ(names[4], "phi[BBB]");
  EXPECT_EQ(names[9], "b");
  ModelState s;
  s.countries = {{1, 0.1, 2}, {3, 0.4, 5}};
  s.hyper = {6, 7, 8, 9};
  EXPECT_EQ(parameter_values(s), (std::vector<double>{1, 0.1, 2, 3, 0.4, 5, 8, 9, 6, 7}));
}

TEST(Diagnostics, PerParameterOnSample) {
  PosteriorSample p;
  p.country_codes = {"AAA"};
  p.n_chains = 2;
  std::mt19937_64 g(6);
  std::normal_distribution<double> z;
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < 500; ++i) {
      Draw d{k, i, {}};
      d.state.countries = {{z(g), 0.5 + 0.1 * z(g), 1 + 0.1 * z(g)}};
      d.state.hyper = {3 + 0.1 * z(g), 10 + z(g), z(g), 3 + 0.1 * z(g)};
      p.draws.push_back(d);
    }
  }
  const auto d = diagnostics(p);
  ASSERT_EQ(d.size(), 7u);
  for (const auto& x : d) {
    EXPECT_LT(x.rhat, 1.05) << x.name;
    EXPECT_GT(x.ess, 500) << x.name;
  }
}
