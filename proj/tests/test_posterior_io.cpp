#include <gtest/gtest.h>

#include "migproj/posterior_io.hpp"
#include "migproj/synthetic.hpp"
#include "oracles.hpp"

using namespace migproj;

namespace {

PosteriorSample sample_fit() {
  SyntheticSpec spec;
  spec.n_countries = 4;
  spec.seed = 3;
  SamplerConfig c;
  c.n_iter = 400;
  c.n_burnin = 200;
  c.thin = 4;
  c.seed = 11;
  return run_chains(make_synthetic(spec).rates, c);
}

}  // namespace

TEST(PosteriorIo, BinaryRoundTripIsExact) {
  const auto s = sample_fit();
  const auto dir = oracle::temp_dir("post");
  save_posterior_binary(s, dir / "p.bin");
  const auto back = load_posterior_binary(dir / "p.bin");
  EXPECT_TRUE(back == s);
}

TEST(PosteriorIo, CsvRoundTripIsExact) {
  const auto s = sample_fit();
  const auto dir = oracle::temp_dir("post");
  save_posterior_csv(s, dir / "p.csv");
  auto back = load_posterior_csv(dir / "p.csv");
  EXPECT_TRUE(back.acceptance.empty());
  back.acceptance = s.acceptance;
  EXPECT_TRUE(back == s);
}

TEST(PosteriorIo, CsvLayout) {
  const auto s = sample_fit();
  const auto text = posterior_to_csv(s);
  const auto rows = csv::parse(text, {"chain", "iter", "param_name", "value"}, "mem");
  EXPECT_EQ(rows.size(), s.draws.size() * (3 * 4 + 4));
  EXPECT_EQ(rows[0].fields[2], "mu[AAA]");
  EXPECT_EQ(rows[15].fields[2], "b");
}

TEST(PosteriorIo, CorruptBinaryRejected) {
  const auto s = sample_fit();
  const auto dir = oracle::temp_dir("post");
  auto bytes = posterior_to_binary(s);
  oracle::write(dir / "trunc.bin", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_posterior_binary(dir / "trunc.bin"), ParseError);
  bytes[0] = 'X';
  oracle::write(dir / "magic.bin", bytes);
  EXPECT_THROW(load_posterior_binary(dir / "magic.bin"), ParseError);
  oracle::write(dir / "extra.bin", posterior_to_binary(s) + "zz");
  EXPECT_THROW(load_posterior_binary(dir / "extra.bin"), ParseError);
  EXPECT_THROW(load_posterior_binary(dir / "missing.bin"), IoError);
}

TEST(PosteriorIo, CsvOutOfOrderRejected) {
  const auto dir = oracle::temp_dir("post");
  oracle::write(dir / "bad.csv", "chain,iter,param_name,value\n0,1,phi[A],0.5\n0,1,mu[A],1\n0,1,sigma2[A],1\n0,1,lambda,0\n0,1,tau,1\n0,1,a,2\n0,1,b,1\n");
  EXPECT_THROW(load_posterior_csv(dir / "bad.csv"), ParseError);
}

TEST(PosteriorIo, DiagnosticsCsv) {
  const auto text = diagnostics_to_csv({{"mu[A]", 1.01, 350.5}});
  EXPECT_EQ(text, "param_name,rhat,ess\nmu[A],1.01,350.5\n");
}
