#include <gtest/gtest.h>

#include <sys/wait.h>

#include <json.hpp>

#include "migproj/cli.hpp"
#include "oracles.hpp"

using namespace migproj;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(MIGPROJ_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return csv::read_file(p); }

/// A small synthetic data set shared by the pipeline tests.
const fs::path& data_dir() {
  static const fs::path dir = [] {
    const auto d = oracle::temp_dir("cli_data");
    const auto r = run({"synth", "--countries", "8", "--periods", "12", "--age-groups", "2", "--seed", "11", "--out", d.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

std::vector<std::string> fit_args(const fs::path& out, const std::string& seed = "5") {
  return {"fit", "--rates", (data_dir() / "rates.csv").string(), "--seed", seed, "--iters", "600", "--burnin", "300",
          "--thin", "3", "--out", out.string()};
}

std::vector<std::string> project_args(const fs::path& posterior, const fs::path& out) {
  return {"project", "--posterior", posterior.string(), "--populations", (data_dir() / "populations.csv").string(),
          "--schedules", (data_dir() / "schedules.csv").string(), "--seed", "6", "--max-draws", "50",
          "--out", out.string()};
}

}  // namespace

TEST(Cli, HelpForEverySubcommand) {
  const auto top = run({"--help"});
  EXPECT_EQ(top.code, 0);
  EXPECT_NE(top.out.find("Exit codes"), std::string::npos);
  for (const char* sub : {"fit", "project", "evaluate", "trends", "gravity"}) {
    const auto r = run({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("--out"), std::string::npos) << sub;
    EXPECT_NE(r.out.find("Exit codes"), std::string::npos) << sub;
  }
  EXPECT_NE(run({"project", "--help"}).out.find("--no-correction"), std::string::npos);
  EXPECT_NE(run({"fit", "--help"}).out.find("--chains"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, cli::kUsage);
  EXPECT_EQ(run({"fit", "--bogus"}).code, cli::kUsage);
  const auto nosseed = run({"fit", "--rates", (data_dir() / "rates.csv").string(), "--out", "x"});
  EXPECT_EQ(nosseed.code, cli::kUsage);
  EXPECT_NE(nosseed.err.find("kind=usage"), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsage);
}

TEST(Cli, MissingFileIsIoError) {
  const auto d = oracle::temp_dir("cli_io");
  const auto r = run({"fit", "--rates", (d / "nope.csv").string(), "--seed", "1", "--out", (d / "o").string()});
  EXPECT_EQ(r.code, cli::kIo);
  EXPECT_NE(r.err.find("kind=io"), std::string::npos);
  EXPECT_NE(r.err.find("nope.csv"), std::string::npos);
}

TEST(Cli, InvalidInput) {
  const auto d = oracle::temp_dir("cli_bad");
  oracle::write(d / "bad.csv", "country_code,period_start,rate\nAAA,1950,1\nAAA,1950,2\n");
  const auto r = run({"fit", "--rates", (d / "bad.csv").string(), "--seed", "1", "--out", (d / "o").string()});
  EXPECT_EQ(r.code, cli::kInvalid);
  EXPECT_NE(r.err.find("bad.csv"), std::string::npos);
  oracle::write(d / "garbled.csv", "country_code,period_start,rate\nAAA,1950,abc\n");
  EXPECT_EQ(run({"fit", "--rates", (d / "garbled.csv").string(), "--seed", "1", "--out", (d / "o").string()}).code,
            cli::kInvalid);
  const auto bad_holdout = run({"evaluate", "--rates", (data_dir() / "rates.csv").string(), "--populations",
                                (data_dir() / "populations.csv").string(), "--holdout", "11", "--seed", "1", "--out",
                                (d / "r.csv").string()});
  EXPECT_EQ(bad_holdout.code, cli::kInvalid);
}

TEST(Cli, BinaryExitCodes) {
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary("fit --bogus"), 2);
  EXPECT_EQ(run_binary("fit --rates /nonexistent/r.csv --seed 1 --out /tmp/x"), 3);
}

TEST(Cli, FitProjectPipeline) {
  const auto d = oracle::temp_dir("cli_pipe");
  const auto rates_before = slurp(data_dir() / "rates.csv");
  const auto pops_before = slurp(data_dir() / "populations.csv");

  const auto f = run(fit_args(d / "fit"));
  ASSERT_EQ(f.code, 0) << f.err;
  for (const char* name : {"rates.csv", "posterior.bin", "posterior.csv", "diagnostics.csv", "acceptance.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(d / "fit" / name)) << name;
  }
  const auto manifest = nlohmann::json::parse(slurp(d / "fit" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "fit");
  EXPECT_EQ(manifest["seed"], 5);
  EXPECT_EQ(manifest["inputs"].size(), 1u);
  EXPECT_EQ(manifest["inputs"].begin().value(), file_sha256(data_dir() / "rates.csv"));
  EXPECT_EQ(manifest["outputs"].size(), 5u);
  EXPECT_TRUE(manifest.contains("version"));
  EXPECT_TRUE(manifest.contains("started_at"));

  const auto posterior = load_posterior_binary(d / "fit" / "posterior.bin");
  EXPECT_EQ(posterior.draws.size(), 3u * 100u);
  EXPECT_EQ(posterior.country_codes.size(), 8u);

  const auto p = run(project_args(d / "fit", d / "proj"));
  ASSERT_EQ(p.code, 0) << p.err;
  const auto ts = load_trajectories(d / "proj" / "trajectories.csv");
  EXPECT_EQ(ts.n_draws, 50u);
  EXPECT_EQ(ts.period_starts.front(), 2010);
  EXPECT_EQ(ts.period_starts.back(), 2095);
  EXPECT_EQ(ts.n_countries(), 8u);
  EXPECT_TRUE(fs::exists(d / "proj" / "summary.csv"));
  EXPECT_TRUE(fs::exists(d / "proj" / "manifest.json"));

  EXPECT_EQ(slurp(data_dir() / "rates.csv"), rates_before);
  EXPECT_EQ(slurp(data_dir() / "populations.csv"), pops_before);

  // Re-running with the same seed reproduces every data file byte for byte.
  ASSERT_EQ(run(fit_args(d / "fit2")).code, 0);
  ASSERT_EQ(run(project_args(d / "fit2", d / "proj2")).code, 0);
  for (const char* name : {"rates.csv", "posterior.bin", "posterior.csv", "diagnostics.csv", "acceptance.csv"}) {
    EXPECT_EQ(slurp(d / "fit" / name), slurp(d / "fit2" / name)) << name;
  }
  EXPECT_EQ(slurp(d / "proj" / "trajectories.csv"), slurp(d / "proj2" / "trajectories.csv"));
  EXPECT_EQ(slurp(d / "proj" / "summary.csv"), slurp(d / "proj2" / "summary.csv"));

  ASSERT_EQ(run(fit_args(d / "fit3", "6")).code, 0);
  EXPECT_NE(slurp(d / "fit" / "posterior.bin"), slurp(d / "fit3" / "posterior.bin"));

  // Outputs never overwrite the posterior directory.
  const auto clash = run(project_args(d / "fit", d / "fit"));
  EXPECT_EQ(clash.code, cli::kInvalid);
  EXPECT_EQ(slurp(d / "fit" / "posterior.bin"), slurp(d / "fit2" / "posterior.bin"));

  // Trends over observed and projected periods.
  const auto t = run({"trends", "--rates", (data_dir() / "rates.csv").string(), "--populations",
                      (data_dir() / "populations.csv").string(), "--trajectories", (d / "proj" / "trajectories.csv").string(),
                      "--parity-from", "2005", "--parity-to", "2050", "--out", (d / "trends.csv").string()});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto trends = slurp(d / "trends.csv");
  EXPECT_EQ(trends.substr(0, trends.find('\n')), "period_start,series,statistic,value");
  EXPECT_NE(trends.find("1950,prop,observed,"), std::string::npos);
  EXPECT_NE(trends.find("2095,mamr,median,"), std::string::npos);
  EXPECT_NE(trends.find("parity_change"), std::string::npos);
  EXPECT_EQ(run({"trends", "--rates", (data_dir() / "rates.csv").string(), "--populations",
                 (data_dir() / "populations.csv").string(), "--parity-from", "2005", "--out", (d / "t2.csv").string()})
                .code,
            cli::kUsage);
}

TEST(Cli, GravityAndEvaluate) {
  const auto d = oracle::temp_dir("cli_grav");
  const auto g = run({"gravity", "--rates", (data_dir() / "rates.csv").string(), "--populations",
                      (data_dir() / "populations.csv").string(), "--out", (d / "params.csv").string(), "--horizon",
                      "2100", "--projections", (d / "proj.csv").string()});
  ASSERT_EQ(g.code, 0) << g.err;
  const auto params = slurp(d / "params.csv");
  EXPECT_EQ(params.substr(0, params.find('\n')), "country_code,a,b");
  EXPECT_EQ(std::count(params.begin(), params.end(), '\n'), 9);
  const auto proj = load_rate_panel(d / "proj.csv");
  EXPECT_EQ(proj.n_countries(), 8u);
  EXPECT_EQ(proj.n_periods(), 18u);
  EXPECT_TRUE(fs::exists(d / "params.csv.manifest.json"));
  EXPECT_EQ(run({"gravity", "--rates", (data_dir() / "rates.csv").string(), "--populations",
                 (data_dir() / "populations.csv").string(), "--out", (d / "p2.csv").string(), "--horizon", "2100"})
                .code,
            cli::kUsage);

  const std::vector<std::string> ev = {"evaluate", "--rates", (data_dir() / "rates.csv").string(), "--populations",
                                       (data_dir() / "populations.csv").string(), "--holdout", "1,2", "--iters", "400",
                                       "--burnin", "200", "--thin", "2", "--seed", "3", "--out",
                                       (d / "report.csv").string()};
  const auto e = run(ev);
  ASSERT_EQ(e.code, 0) << e.err;
  const auto report = slurp(d / "report.csv");
  EXPECT_EQ(report.substr(0, report.find('\n')), "validation_years,model,mae,coverage_80,coverage_95,cells");
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 7);
  EXPECT_NE(report.find("5,bayes,"), std::string::npos);
  EXPECT_NE(report.find("10,persistence,"), std::string::npos);
  auto ev2 = ev;
  ev2.back() = (d / "report2.csv").string();
  ASSERT_EQ(run(ev2).code, 0);
  EXPECT_EQ(report, slurp(d / "report2.csv"));

  auto only = ev;
  only.back() = (d / "report3.csv").string();
  only.insert(only.end() - 2, {"--models", "persistence"});
  ASSERT_EQ(run(only).code, 0);
  const auto r3 = slurp(d / "report3.csv");
  EXPECT_EQ(r3.find("bayes"), std::string::npos);
  auto bad = ev;
  bad.insert(bad.end() - 2, {"--models", "oracle"});
  EXPECT_NE(run(bad).code, 0);
}
