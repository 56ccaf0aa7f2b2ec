#pragma once

// Command-line front end: fit, project, evaluate, trends, gravity (and the
// hidden synth generator). Every stage reads and writes plain files so stages
// can be run, inspected and resumed independently.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "migproj/baselines.hpp"
#include "migproj/diagnostics.hpp"
#include "migproj/error.hpp"
#include "migproj/evaluation.hpp"
#include "migproj/manifest.hpp"
#include "migproj/panel.hpp"
#include "migproj/posterior_io.hpp"
#include "migproj/projector.hpp"
#include "migproj/sampler.hpp"
#include "migproj/synthetic.hpp"

namespace migproj::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kIo = 3,
  kInvalid = 4,
  kNumerical = 5,
};

inline constexpr const char* kExitCodeHelp =
    "Exit codes: 0 success, 1 internal error, 2 usage error (unknown or missing flag), "
    "3 I/O error (missing or unwritable file), 4 invalid input (parse error or invariant violation), "
    "5 numerical failure.";

namespace detail {

inline std::string one_line(std::string s) {
  for (auto& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

inline int report(std::ostream& err, int code, const char* kind, const std::string& message) {
  err << "error: kind=" << kind << " code=" << code << " message=\"" << one_line(message) << "\"\n";
  return code;
}

inline void require_file(const fs::path& p, const std::string& flag) {
  if (!fs::is_regular_file(p)) throw IoError(flag + ": no such file " + p.string());
}

inline void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

inline fs::path manifest_for_file(const fs::path& out) {
  auto m = out;
  m += ".manifest.json";
  return m;
}

/// Collects every option given on the command line of `app` as name -> value.
inline std::map<std::string, std::string> collect_flags(const CLI::App& app) {
  std::map<std::string, std::string> flags;
  for (const auto* opt : app.get_options()) {
    if (opt->get_name() == "--help" || opt->count() == 0) continue;
    std::string v;
    for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
    flags[opt->get_name()] = v.empty() ? "true" : v;
  }
  return flags;
}

struct Stage {
  RunManifest manifest;

  void input(const fs::path& p) { manifest.input_digests[p.string()] = file_sha256(p); }
  void output(const fs::path& p) { manifest.output_digests[p.filename().string()] = file_sha256(p); }
};

inline Stage begin(const CLI::App& sub, std::optional<std::uint64_t> seed) {
  Stage s;
  s.manifest.command = sub.get_name();
  s.manifest.flags = collect_flags(sub);
  if (seed) {
    s.manifest.seed = *seed;
    s.manifest.has_seed = true;
  }
  s.manifest.started_at = utc_timestamp();
  return s;
}

inline void finish(Stage& s, const fs::path& manifest_path) {
  s.manifest.finished_at = utc_timestamp();
  s.manifest.write(manifest_path);
}

inline std::set<std::string> parse_models(const std::string& list) {
  std::set<std::string> out;
  for (const auto& m : csv::split(list)) {
    if (m != "bayes" && m != "persistence" && m != "gravity") throw ValidationError("--models: unknown model '" + m + "'");
    out.insert(m);
  }
  if (out.empty()) throw ValidationError("--models: empty list");
  return out;
}

}  // namespace detail

struct SamplerFlags {
  std::size_t iters = 20000;
  std::optional<std::size_t> burnin;
  std::size_t chains = 3;
  std::size_t thin = 10;
  bool no_adapt = false;

  void add_to(CLI::App* sub) {
    sub->add_option("--iters", iters, "MCMC iterations per chain")->capture_default_str();
    sub->add_option("--burnin", burnin, "burn-in iterations (default: iters / 2)");
    sub->add_option("--chains", chains, "number of chains")->capture_default_str();
    sub->add_option("--thin", thin, "keep every n-th post-burn-in iteration")->capture_default_str();
    sub->add_flag("--no-adapt", no_adapt, "do not adapt Metropolis scales during burn-in");
  }

  SamplerConfig config(std::uint64_t seed, std::size_t threads) const {
    SamplerConfig c;
    c.n_iter = iters;
    c.n_burnin = burnin.value_or(iters / 2);
    c.n_chains = chains;
    c.thin = thin;
    c.seed = seed;
    c.adapt_burnin = !no_adapt;
    c.threads = threads;
    return c;
  }
};

/// Runs the CLI on `args` (without the program name).
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Probabilistic projection of net international migration rates"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  std::size_t threads = 1;

  // fit
  auto* fit = app.add_subcommand("fit", "fit the hierarchical AR(1) model by MCMC");
  fit->footer(kExitCodeHelp);
  fs::path fit_rates, fit_out;
  std::uint64_t fit_seed = 0;
  SamplerFlags fit_sampler;
  fit->add_option("--rates", fit_rates, "rate panel CSV (country_code,period_start,rate)")->required();
  fit->add_option("--seed", fit_seed, "random seed")->required();
  fit->add_option("--out", fit_out, "output directory")->required();
  fit_sampler.add_to(fit);
  fit->add_option("--threads", threads, "maximum worker threads")->capture_default_str();

  // project
  auto* project = app.add_subcommand("project", "simulate posterior-predictive trajectories");
  project->footer(kExitCodeHelp);
  fs::path proj_posterior, proj_pops, proj_out;
  std::optional<fs::path> proj_schedules, proj_rates;
  int proj_horizon = 2100;
  std::uint64_t proj_seed = 0;
  bool proj_no_correction = false;
  std::size_t proj_max_draws = 0;
  project->add_option("--posterior", proj_posterior, "directory written by fit")->required();
  project->add_option("--populations", proj_pops, "population CSV (country_code,period_start,population)")->required();
  project->add_option("--schedules", proj_schedules, "age/sex schedule CSV (default: one merged cell)");
  project->add_option("--rates", proj_rates, "rate panel supplying the last observed rates (default: <posterior>/rates.csv)");
  project->add_option("--horizon", proj_horizon, "end year of the last simulated period (2100: through 2095-2100)")->capture_default_str();
  project->add_option("--seed", proj_seed, "random seed")->required();
  project->add_option("--out", proj_out, "output directory")->required();
  project->add_flag("--no-correction", proj_no_correction, "skip the zero-sum correction");
  project->add_option("--max-draws", proj_max_draws, "use at most this many evenly spaced posterior draws (0: all)")
      ->capture_default_str();
  project->add_option("--threads", threads, "maximum worker threads")->capture_default_str();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "out-of-sample validation against persistence and gravity baselines");
  evaluate->footer(kExitCodeHelp);
  fs::path ev_rates, ev_pops, ev_out;
  std::optional<fs::path> ev_schedules;
  std::vector<std::size_t> ev_holdout;
  std::string ev_models = "bayes,persistence,gravity";
  std::uint64_t ev_seed = 0;
  bool ev_no_correction = false;
  SamplerFlags ev_sampler;
  evaluate->add_option("--rates", ev_rates, "rate panel CSV")->required();
  evaluate->add_option("--populations", ev_pops, "population CSV covering the held-out periods")->required();
  evaluate->add_option("--schedules", ev_schedules, "age/sex schedule CSV (default: one merged cell)");
  evaluate->add_option("--holdout", ev_holdout, "number(s) of most recent periods to hold out")
      ->required()
      ->delimiter(',');
  evaluate->add_option("--models", ev_models, "comma-separated subset of bayes,persistence,gravity")->capture_default_str();
  evaluate->add_option("--seed", ev_seed, "random seed")->required();
  evaluate->add_option("--out", ev_out, "report CSV")->required();
  evaluate->add_flag("--no-correction", ev_no_correction, "skip the zero-sum correction");
  ev_sampler.add_to(evaluate);
  evaluate->add_option("--threads", threads, "maximum worker threads")->capture_default_str();

  // trends
  auto* trends = app.add_subcommand("trends", "proportion migrating and mean absolute migration rate series");
  trends->footer(kExitCodeHelp);
  fs::path tr_rates, tr_pops, tr_out;
  std::optional<fs::path> tr_traj;
  std::optional<int> tr_parity_from, tr_parity_to;
  trends->add_option("--rates", tr_rates, "rate panel CSV")->required();
  trends->add_option("--populations", tr_pops, "population CSV")->required();
  trends->add_option("--trajectories", tr_traj, "trajectory CSV from project, adds projected quantiles");
  auto* parity_from = trends->add_option("--parity-from", tr_parity_from, "period start for the parity-change statistic");
  auto* parity_to = trends->add_option("--parity-to", tr_parity_to, "second period start for the parity-change statistic");
  parity_from->needs(parity_to);
  parity_to->needs(parity_from);
  trends->add_option("--out", tr_out, "output CSV")->required();

  // gravity
  auto* gravity = app.add_subcommand("gravity", "fit (and optionally project) the gravity baseline");
  gravity->footer(kExitCodeHelp);
  fs::path gr_rates, gr_pops, gr_out;
  std::optional<int> gr_from, gr_to, gr_horizon;
  std::optional<fs::path> gr_projections;
  gravity->add_option("--rates", gr_rates, "rate panel CSV")->required();
  gravity->add_option("--populations", gr_pops, "population CSV")->required();
  gravity->add_option("--from", gr_from, "first period start used in the fit (default: first)");
  gravity->add_option("--to", gr_to, "last period start used in the fit (default: last)");
  gravity->add_option("--out", gr_out, "parameter CSV (country_code,a,b)")->required();
  auto* gr_horizon_opt = gravity->add_option("--horizon", gr_horizon, "project periods ending by this year");
  auto* gr_proj_opt = gravity->add_option("--projections", gr_projections, "projected rate CSV (country_code,period_start,rate)");
  gr_horizon_opt->needs(gr_proj_opt);
  gr_proj_opt->needs(gr_horizon_opt);

  // synth (hidden)
  auto* synth = app.add_subcommand("synth", "");
  synth->group("");
  SyntheticSpec spec;
  fs::path sy_out;
  synth->add_option("--countries", spec.n_countries)->capture_default_str();
  synth->add_option("--periods", spec.n_periods)->capture_default_str();
  synth->add_option("--first-period", spec.first_period)->capture_default_str();
  synth->add_option("--horizon", spec.horizon)->capture_default_str();
  synth->add_option("--age-groups", spec.n_age_groups)->capture_default_str();
  synth->add_option("--lambda", spec.hyper.lambda)->capture_default_str();
  synth->add_option("--tau", spec.hyper.tau)->capture_default_str();
  synth->add_option("--a", spec.hyper.a)->capture_default_str();
  synth->add_option("--b", spec.hyper.b)->capture_default_str();
  synth->add_option("--seed", spec.seed)->required();
  synth->add_option("--out", sy_out)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return detail::report(err, kUsage, "usage", e.what());
  }

  try {
    if (*fit) {
      detail::require_file(fit_rates, "--rates");
      auto stage = detail::begin(*fit, fit_seed);
      stage.input(fit_rates);
      const auto full = load_rate_panel(fit_rates);
      const auto panel = full.with_min_observed(kMinObservedForFit);
      for (const auto& code : full.country_codes()) {
        if (!panel.country_index(code)) {
          err << "note: " << code << " has fewer than " << kMinObservedForFit << " observed periods; not fitted\n";
        }
      }
      const auto cfg = fit_sampler.config(fit_seed, threads);
      const auto sample = run_chains(panel, cfg);
      detail::make_dir(fit_out);
      save_rate_panel(panel, fit_out / "rates.csv");
      save_posterior_binary(sample, fit_out / "posterior.bin");
      save_posterior_csv(sample, fit_out / "posterior.csv");
      csv::write_file_atomic(fit_out / "diagnostics.csv", diagnostics_to_csv(diagnostics(sample)));
      std::string acc = "chain,phi,tau,ab\n";
      for (std::size_t k = 0; k < sample.acceptance.size(); ++k) {
        acc += std::to_string(k) + ',' + csv::format_double(sample.acceptance[k].phi) + ',' +
               csv::format_double(sample.acceptance[k].tau) + ',' + csv::format_double(sample.acceptance[k].ab) + '\n';
      }
      csv::write_file_atomic(fit_out / "acceptance.csv", acc);
      for (const char* f : {"rates.csv", "posterior.bin", "posterior.csv", "diagnostics.csv", "acceptance.csv"}) {
        stage.output(fit_out / f);
      }
      detail::finish(stage, fit_out / "manifest.json");
      out << "fit: " << panel.n_countries() << " countries, " << sample.draws.size() << " draws -> " << fit_out.string()
          << "\n";
      return kOk;
    }

    if (*project) {
      const fs::path rates_path = proj_rates.value_or(proj_posterior / "rates.csv");
      const fs::path post_path = proj_posterior / "posterior.bin";
      detail::require_file(post_path, "--posterior");
      detail::require_file(rates_path, "--rates");
      detail::require_file(proj_pops, "--populations");
      if (proj_schedules) detail::require_file(*proj_schedules, "--schedules");
      if (fs::exists(proj_out) && fs::equivalent(proj_out, proj_posterior)) {
        throw ValidationError("--out must differ from --posterior");
      }
      auto stage = detail::begin(*project, proj_seed);
      stage.input(post_path);
      stage.input(rates_path);
      stage.input(proj_pops);
      if (proj_schedules) stage.input(*proj_schedules);

      auto posterior = load_posterior_binary(post_path);
      if (proj_max_draws > 0 && posterior.draws.size() > proj_max_draws) {
        std::vector<Draw> kept;
        const double step = static_cast<double>(posterior.draws.size()) / static_cast<double>(proj_max_draws);
        for (std::size_t i = 0; i < proj_max_draws; ++i) {
          kept.push_back(posterior.draws[static_cast<std::size_t>(static_cast<double>(i) * step)]);
        }
        posterior.draws = std::move(kept);
      }
      const auto rates = load_rate_panel(rates_path);
      std::vector<double> last;
      for (const auto& code : posterior.country_codes) {
        const auto c = rates.country_index(code);
        if (!c) throw ValidationError("rate panel lacks fitted country " + code);
        last.push_back(rates(*c, rates.n_periods() - 1));
      }
      const auto pops = load_population_panel(proj_pops);
      const auto schedules =
          proj_schedules ? load_schedules(*proj_schedules) : ScheduleSet::degenerate(posterior.country_codes);
      SimulateOptions so;
      so.correct = !proj_no_correction;
      so.threads = threads;
      const auto ts = simulate(posterior, last, rates.last_period(), pops, schedules, proj_horizon, proj_seed, so);
      detail::make_dir(proj_out);
      save_trajectories(ts, proj_out / "trajectories.csv");
      csv::write_file_atomic(proj_out / "summary.csv", summary_to_csv(summarize(ts)));
      stage.output(proj_out / "trajectories.csv");
      stage.output(proj_out / "summary.csv");
      detail::finish(stage, proj_out / "manifest.json");
      out << "project: " << ts.n_draws << " trajectories x " << ts.n_countries() << " countries x " << ts.n_periods()
          << " periods -> " << proj_out.string() << "\n";
      return kOk;
    }

    if (*evaluate) {
      detail::require_file(ev_rates, "--rates");
      detail::require_file(ev_pops, "--populations");
      if (ev_schedules) detail::require_file(*ev_schedules, "--schedules");
      auto stage = detail::begin(*evaluate, ev_seed);
      stage.input(ev_rates);
      stage.input(ev_pops);
      if (ev_schedules) stage.input(*ev_schedules);
      const auto rates = load_rate_panel(ev_rates);
      const auto pops = load_population_panel(ev_pops);
      std::optional<ScheduleSet> schedules;
      if (ev_schedules) schedules = load_schedules(*ev_schedules);
      EvalOptions opts;
      opts.models = detail::parse_models(ev_models);
      opts.sampler = ev_sampler.config(ev_seed, threads);
      opts.projection_seed = ev_seed ^ 0x5DEECE66DULL;
      opts.correct = !ev_no_correction;
      opts.schedules = schedules ? &*schedules : nullptr;
      EvalReport report;
      for (const auto m : ev_holdout) {
        const auto r = evaluate_holdout(rates, pops, m, opts);
        report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
      }
      if (ev_out.has_parent_path()) detail::make_dir(ev_out.parent_path());
      csv::write_file_atomic(ev_out, report_to_csv(report));
      stage.output(ev_out);
      detail::finish(stage, detail::manifest_for_file(ev_out));
      out << report_to_csv(report);
      return kOk;
    }

    if (*trends) {
      detail::require_file(tr_rates, "--rates");
      detail::require_file(tr_pops, "--populations");
      if (tr_traj) detail::require_file(*tr_traj, "--trajectories");
      auto stage = detail::begin(*trends, std::nullopt);
      stage.input(tr_rates);
      stage.input(tr_pops);
      if (tr_traj) stage.input(*tr_traj);
      const auto rates = load_rate_panel(tr_rates);
      const auto pops = load_population_panel(tr_pops);
      std::string csv_out = "period_start,series,statistic,value\n";
      auto row = [&](int period, const char* series, const char* stat, double v) {
        csv_out += std::to_string(period) + ',' + series + ',' + stat + ',';
        csv::append_double(csv_out, v);
        csv_out += '\n';
      };
      const auto prop = prop_t(rates, pops);
      const auto mamr = mamr_t(rates);
      for (std::size_t t = 0; t < rates.n_periods(); ++t) {
        row(rates.period_starts()[t], "prop", "observed", prop[t]);
        row(rates.period_starts()[t], "mamr", "observed", mamr[t]);
      }
      std::optional<TrajectorySet> ts;
      if (tr_traj) {
        ts = load_trajectories(*tr_traj);
        const auto pp = prop_t(*ts, pops);
        const auto mm = mamr_t(*ts);
        const std::size_t P = ts->n_periods();
        for (std::size_t t = 0; t < P; ++t) {
          for (const auto& [series, values] : {std::pair{"prop", &pp}, std::pair{"mamr", &mm}}) {
            std::vector<double> v(ts->n_draws);
            for (std::size_t k = 0; k < ts->n_draws; ++k) v[k] = (*values)[k * P + t];
            std::sort(v.begin(), v.end());
            row(ts->period_starts[t], series, "median", quantile_sorted(v, 0.5));
            row(ts->period_starts[t], series, "p10", quantile_sorted(v, 0.1));
            row(ts->period_starts[t], series, "p90", quantile_sorted(v, 0.9));
            row(ts->period_starts[t], series, "p2_5", quantile_sorted(v, 0.025));
            row(ts->period_starts[t], series, "p97_5", quantile_sorted(v, 0.975));
          }
        }
      }
      if (tr_parity_from) {
        const int a = *tr_parity_from, b = *tr_parity_to;
        double frac = 0.0;
        if (rates.period_index(a) && rates.period_index(b)) {
          frac = parity_change_fraction(rates, a, b);
        } else if (ts && rates.period_index(a)) {
          std::vector<double> obs;
          const auto ta = *rates.period_index(a);
          for (const auto& code : ts->country_codes) {
            const auto c = rates.country_index(code);
            if (!c) throw ValidationError("rate panel lacks " + code);
            obs.push_back(rates(*c, ta));
          }
          frac = parity_change_fraction(obs, *ts, b);
        } else if (ts) {
          frac = parity_change_fraction(*ts, a, b);
        } else {
          throw ValidationError("parity periods not found in the rate panel");
        }
        row(b, "parity_change", ("from_" + std::to_string(a)).c_str(), frac);
      }
      if (tr_out.has_parent_path()) detail::make_dir(tr_out.parent_path());
      csv::write_file_atomic(tr_out, csv_out);
      stage.output(tr_out);
      detail::finish(stage, detail::manifest_for_file(tr_out));
      return kOk;
    }

    if (*gravity) {
      detail::require_file(gr_rates, "--rates");
      detail::require_file(gr_pops, "--populations");
      auto stage = detail::begin(*gravity, std::nullopt);
      stage.input(gr_rates);
      stage.input(gr_pops);
      const auto rates = load_rate_panel(gr_rates);
      const auto pops = load_population_panel(gr_pops);
      const int from = gr_from.value_or(rates.period_starts().front());
      const int to = gr_to.value_or(rates.last_period());
      const auto fits = gravity_fit_panel(rates, pops, from, to);
      std::string params = "country_code,a,b\n";
      for (const auto& f : fits) {
        params += f.country_code + ',' + csv::format_double(f.params.a) + ',' + csv::format_double(f.params.b) + '\n';
      }
      if (gr_out.has_parent_path()) detail::make_dir(gr_out.parent_path());
      csv::write_file_atomic(gr_out, params);
      stage.output(gr_out);
      if (gr_projections) {
        const auto periods = future_periods(rates.last_period(), *gr_horizon);
        const auto projected = gravity_project_rates(fits, pops, periods);
        std::vector<std::string> codes;
        for (const auto& f : fits) codes.push_back(f.country_code);
        if (gr_projections->has_parent_path()) detail::make_dir(gr_projections->parent_path());
        csv::write_file_atomic(*gr_projections, migproj::detail::write_long_panel(codes, periods, projected, "rate"));
        stage.output(*gr_projections);
      }
      detail::finish(stage, detail::manifest_for_file(gr_out));
      out << "gravity: fitted " << fits.size() << " countries -> " << gr_out.string() << "\n";
      return kOk;
    }

    if (*synth) {
      auto stage = detail::begin(*synth, spec.seed);
      const auto data = make_synthetic(spec);
      detail::make_dir(sy_out);
      save_rate_panel(data.rates, sy_out / "rates.csv");
      save_population_panel(data.populations, sy_out / "populations.csv");
      save_schedules(data.schedules, sy_out / "schedules.csv");
      csv::write_file_atomic(sy_out / "truth.csv", state_to_csv(data.truth, data.rates.country_codes()));
      for (const char* f : {"rates.csv", "populations.csv", "schedules.csv", "truth.csv"}) stage.output(sy_out / f);
      detail::finish(stage, sy_out / "manifest.json");
      return kOk;
    }
  } catch (const IoError& e) {
    return detail::report(err, kIo, "io", e.what());
  } catch (const ParseError& e) {
    return detail::report(err, kInvalid, "parse", e.what());
  } catch (const ValidationError& e) {
    return detail::report(err, kInvalid, "invalid", e.what());
  } catch (const DimensionError& e) {
    return detail::report(err, kInvalid, "dimension", e.what());
  } catch (const NumericalError& e) {
    return detail::report(err, kNumerical, "numerical", e.what());
  } catch (const std::exception& e) {
    return detail::report(err, kInternal, "internal", e.what());
  }
  return detail::report(err, kUsage, "usage", "no subcommand given");
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, out, err);
}

}  // namespace migproj::cli
