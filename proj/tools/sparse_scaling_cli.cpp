// Copyright 2026 The sparse-scaling Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include <sparse_scaling/analysis.hpp>
#include <sparse_scaling/fitting.hpp>
#include <sparse_scaling/gd_failure.hpp>
#include <sparse_scaling/io.hpp>
#include <sparse_scaling/sweep.hpp>
#include <sparse_scaling/theory.hpp>
#include <sparse_scaling/version.hpp>

#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace sparse_scaling;
using namespace sparse_scaling::cli;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

json fit_json(const std::string& label, const ExponentFit& f) {
  return {{"series", label},
          {"exponent", f.exponent},
          {"stderr_exponent", std::isfinite(f.stderr_exponent) ? json(f.stderr_exponent) : json(nullptr)},
          {"intercepts_log10", f.intercepts},
          {"tail_count", f.tail_count},
          {"residual_rms", f.residual_rms},
          {"excluded_points", f.excluded},
          {"fit_window", "last tail_count points of each series; shared across series in joint fits"}};
}

void print_fit_table(const std::vector<std::pair<std::string, ExponentFit>>& fits) {
  std::printf("%-28s %10s %10s %6s %10s %8s\n", "series", "exponent", "stderr", "tail", "rms(ln)", "excluded");
  for (const auto& [label, f] : fits)
    std::printf("%-28s %10.4f %10.4f %6d %10.4f %8d\n", label.c_str(), f.exponent, f.stderr_exponent, f.tail_count,
                f.residual_rms, f.excluded);
}

// ---------------------------------------------------------------------------
// theory

int run_theory(double a1, double a2, const std::vector<double>& ds, const std::vector<double>& budgets, double eta,
               double n, const std::string& format) {
  const SparsityParams p{a1, a2, 10000};
  ExponentSet e;
  try {
    e = predicted_exponents(p);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  const bool sparse = a1 > 0.0;
  std::vector<std::vector<std::string>> rows;
  auto row = [&](std::vector<std::string> r) { rows.push_back(std::move(r)); };
  row({"exponents", "alpha_N", fmt("%.6g", e.alpha_n)});
  row({"exponents", "alpha_D", fmt("%.6g", e.alpha_d)});
  row({"exponents", "alpha_C", fmt("%.6g", e.alpha_c)});
  row({"exponents", "regime", to_string(e.regime)});
  if (sparse) {
    row({"collapse", "xi_crit", fmt("%.6g", xi_crit(a1))});
    for (double d : ds) {
      row({"k_of_d", fmt("%.6g", d), fmt("%.6g", k_of_d(a1, d))});
      row({"over_loss", fmt("%.6g", d), fmt("%.6g", closed_form_over_loss(p, d))});
    }
    const ComputeOptimal co = compute_optimal(p, budgets.empty() ? 1.0 : budgets.front());
    row({"compute_optimal", "n_exponent", fmt("%.6g", co.n_exponent)});
    row({"compute_optimal", "d_exponent", fmt("%.6g", co.d_exponent)});
    for (double c : budgets) {
      const ComputeOptimal o = compute_optimal(p, c);
      row({"compute_optimal", fmt("%.6g", c), fmt("%.6g", o.n_star) + ";" + fmt("%.6g", o.d_star) + ";" + fmt("%.6g", o.loss_star)});
    }
    for (double d : ds) {
      const ConditionModel cm = condition_number_model(p, n, d);
      row({"condition", fmt("%.6g", n) + ";" + fmt("%.6g", d),
           fmt("%.6g", cm.kappa) + ";" + to_string(cm.regime) + ";" + fmt("%.6g", cm.cost.gd) + ";" +
               fmt("%.6g", cm.cost.accelerated) + ";" + fmt("%.6g", cm.cost.direct) + ";" + fmt("%.6g", cm.crossover_n)});
    }
  }
  const FailureLaw fl = failure_law(p, eta);
  row({"failure_law", "applicable", fl.applicable ? "true" : "false"});
  if (fl.applicable) {
    row({"failure_law", "nu", fmt("%.6g", fl.nu)});
    for (double d : ds) row({"failure_law", "j_star;" + fmt("%.6g", d), fmt("%.6g", fl.j_star(d, eta))});
  }

  if (format == "text" || format == "both") {
    std::printf("data model       alpha1 = %g, alpha2 = %g\n", a1, a2);
    std::printf("regime           %s\n", to_string(e.regime));
    std::printf("alpha_N          %.4f\n", e.alpha_n);
    std::printf("alpha_D          %.4f\n", e.alpha_d);
    std::printf("alpha_C          %.4f\n", e.alpha_c);
    if (sparse) {
      std::printf("xi_crit          %.6f\n\n", xi_crit(a1));
      std::printf("%12s %14s %14s\n", "D", "K(D)", "over-loss");
      for (double d : ds) std::printf("%12.6g %14.6g %14.6g\n", d, k_of_d(a1, d), closed_form_over_loss(p, d));
      const ComputeOptimal co = compute_optimal(p, 1.0);
      std::printf("\ncompute-optimal  N* ~ C^%.4f, D* ~ C^%.4f, loss* ~ C^-%.4f\n", co.n_exponent, co.d_exponent, co.alpha_c);
      std::printf("%12s %14s %14s %14s\n", "C", "N*", "D*", "loss*");
      for (double c : budgets) {
        const ComputeOptimal o = compute_optimal(p, c);
        std::printf("%12.6g %14.6g %14.6g %14.6g\n", c, o.n_star, o.d_star, o.loss_star);
      }
      std::printf("\ncondition model at N = %g\n", n);
      std::printf("%12s %12s %26s %12s %12s %12s %12s\n", "D", "kappa", "regime", "gd/ND", "accel/ND", "direct/ND", "N_c(D)");
      for (double d : ds) {
        const ConditionModel cm = condition_number_model(p, n, d);
        std::printf("%12.6g %12.4g %26s %12.4g %12.4g %12.4g %12.4g\n", d, cm.kappa, to_string(cm.regime), cm.cost.gd,
                    cm.cost.accelerated, cm.cost.direct, cm.crossover_n);
      }
    } else {
      std::printf("(K(D), xi_crit, compute-optimal allocation and condition model need alpha1 > 0)\n");
    }
    std::printf("\nfailure law      %s", fl.applicable ? "applicable" : "not applicable (needs alpha2 < -1)");
    if (fl.applicable) {
      std::printf(", nu = %.4f\n", fl.nu);
      for (double d : ds) std::printf("  j*(D = %g, eta = %g) = %.6g\n", d, eta, fl.j_star(d, eta));
    } else {
      std::printf("\n");
    }
  }
  if (format == "csv" || format == "both") {
    if (format == "both") std::printf("\n");
    std::printf("section,key,value\n");
    for (const auto& r : rows) std::printf("%s,%s,%s\n", r[0].c_str(), r[1].c_str(), r[2].c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// experiment commands

struct RunOptions {
  std::string config_path;
  std::string out;
  bool overwrite = false;
  std::string preset;
  std::string name;
  int workers = -1;
  int seeds = -1;
  bool quiet = false;
};

fs::path resolve_out_dir(const RunOptions& o, const RunConfig& c) {
  if (!o.out.empty()) return o.out;
  const char* root = std::getenv("SPARSE_SCALING_OUT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / (c.name + "-" + config_hash(c).substr(0, 8));
}

json summarize_sweep(const RunConfig& c, const std::vector<SweepRecord>& recs) {
  json fits = json::array();
  const ScaleAxis axis = c.axis == "n" ? ScaleAxis::n : ScaleAxis::d;
  const std::vector<GridMean> means = seed_average(recs);
  std::printf("%10s %10s %14s %12s %6s %8s\n", "N", "D", "mean loss", "sem", "seeds", "excluded");
  for (const GridMean& g : means)
    std::printf("%10lld %10lld %14.6g %12.4g %6d %8d\n", static_cast<long long>(g.n), static_cast<long long>(g.d), g.loss,
                g.loss_sem, g.seeds, g.excluded);
  try {
    const ExponentFit f = loglog_fit_valid(to_series(means, axis), c.resolved_tail_count());
    std::printf("\n");
    print_fit_table({{std::string(to_string(c.kind)) + " " + c.axis + "-sweep", f}});
    fits.push_back(fit_json(std::string(to_string(c.kind)) + " " + c.axis + "-sweep", f));
  } catch (const std::exception& e) {
    std::printf("\nfit skipped: %s\n", e.what());
  }
  return fits;
}

json summarize_collapse(const RunConfig& c, const std::vector<SweepRecord>& recs) {
  const SparsityParams p = c.params();
  const auto curves = collapse_curves(recs, p);
  std::vector<double> xs = c.xi_values;
  std::sort(xs.begin(), xs.end());
  const auto overlay = collapse_overlay(curves, xs);
  const double xc = xi_crit(p.alpha1);
  std::printf("%10s %14s %10s %9s %s\n", "xi", "mean rescaled", "spread", "families", "");
  json rows = json::array();
  std::vector<double> pooled;
  for (const auto& o : overlay) {
    const bool in_window = o.xi >= xc / 2.0 && o.xi <= 2.0 * xc;
    std::printf("%10.4f %14.6g %10.4f %9d %s\n", o.xi, o.mean, o.spread, o.families, in_window ? "peak window" : "");
    rows.push_back({{"xi", o.xi}, {"mean", o.mean}, {"spread", o.spread}, {"families", o.families}, {"peak_window", in_window}});
    pooled.push_back(o.mean);
  }
  json peaks = json::array();
  for (std::size_t i : local_maxima(pooled)) peaks.push_back(xs[i]);
  std::printf("\nxi_crit = %.4f; local maxima of the pooled curve at xi = %s\n", xc, peaks.dump().c_str());
  return {{"overlay", rows}, {"local_maxima_xi", peaks}, {"xi_crit", xc}};
}

json summarize_frontier(const RunConfig& c, const std::vector<SweepRecord>& recs) {
  const auto env = compute_frontier(recs);
  std::printf("%14s %14s %8s %10s\n", "C", "envelope", "N", "D");
  for (const auto& p : env)
    std::printf("%14.6g %14.6g %8lld %10lld\n", p.compute, p.min_loss, static_cast<long long>(p.n), static_cast<long long>(p.d));
  json out = {{"predicted_alpha_c", predicted_exponents(c.params()).alpha_c}};
  try {
    const FrontierSlope s = frontier_slope(recs);
    std::printf("\nenvelope slope over [%.4g, %.4g]: %.4f (stderr %.4f); predicted -alpha_C = %.4f\n", s.c_low, s.c_high,
                -s.fit.exponent, s.fit.stderr_exponent, -predicted_exponents(c.params()).alpha_c);
    out["slope"] = -s.fit.exponent;
    out["window"] = {s.c_low, s.c_high};
    out["fit"] = fit_json("envelope", s.fit);
  } catch (const std::exception& e) {
    std::printf("\nslope skipped: %s\n", e.what());
  }
  return out;
}

int run_experiment(const std::string& command, const RunOptions& opt) {
  RunConfig cfg;
  fs::path out_dir;
  try {
    json doc = json::object();
    if (!opt.config_path.empty()) {
      std::ifstream in(opt.config_path);
      if (!in) throw ConfigError("cannot read config file " + opt.config_path);
      try {
        doc = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
    }
    if (!opt.preset.empty()) doc["preset"] = opt.preset;
    if (!opt.name.empty()) doc["name"] = opt.name;
    if (opt.seeds >= 0) doc["seeds"] = {{"start", 0}, {"count", opt.seeds}};
    if (opt.workers >= 0) doc["workers"] = opt.workers;
    cfg = parse_config(doc, command);
    validate(cfg);
    out_dir = resolve_out_dir(opt, cfg);
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !opt.overwrite)
      throw ConfigError("output directory " + out_dir.string() + " exists; pass --overwrite to replace its contents");
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 2;
  }

  const std::string hash = config_hash(cfg);
  std::printf("run %s (config %s) -> %s\n", cfg.name.c_str(), hash.c_str(), out_dir.string().c_str());
  json manifest;
  manifest["config_hash"] = hash;
  manifest["config"] = to_json(cfg);
  manifest["version"] = {{"sparse_scaling", kVersion},
                         {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                       std::to_string(EIGEN_MINOR_VERSION)},
                         {"compiler", __VERSION__}};
  const auto t0 = std::chrono::steady_clock::now();
  json summary;
  std::vector<std::string> warnings;

  try {
    fs::create_directories(out_dir);
    if (command == "gd-failure") {
      const auto rows = gd_failure_mc(cfg.params(), cfg.failure_d, cfg.epsilon, cfg.failure_trials, cfg.name);
      const auto local = local_exponents(rows);
      write_failures_csv((out_dir / "failures.csv").string(), rows);
      std::printf("%10s %10s %10s %10s %22s %10s\n", "D", "failures", "trials", "p_hat", "95% Wilson", "local nu");
      json jr = json::array();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const std::string nu = i == 0 ? "" : fmt("%.3f", local[i - 1]);
        std::printf("%10lld %10lld %10lld %10.4f       [%.4f, %.4f] %10s\n", static_cast<long long>(r.d),
                    static_cast<long long>(r.failures), static_cast<long long>(r.trials), r.p_hat, r.ci.lower, r.ci.upper,
                    nu.c_str());
        jr.push_back({{"D", r.d}, {"failures", r.failures}, {"trials", r.trials}, {"p_hat", r.p_hat},
                      {"ci", {r.ci.lower, r.ci.upper}}});
      }
      const double nu = failure_law(cfg.params()).nu;
      std::printf("\nasymptotic nu = %.4f (local exponents approach it only at far larger D)\n", nu);
      summary = {{"rows", jr}, {"predicted_nu", nu}};
      std::ofstream(out_dir / "plot.py") << plot_script(SweepMode::gd_failure, cfg.alpha1, cfg.alpha2);
      manifest["records"] = rows.size();
    } else {
      const SweepSpec spec = to_spec(cfg);
      warnings = truncation_warnings(spec.params, spec.grid);
      for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      const auto recs = run_sweep(spec, [&](std::size_t done, std::size_t total) {
        if (!opt.quiet) std::fprintf(stderr, "\rseeds %zu/%zu", done, total);
        if (!opt.quiet && done == total) std::fprintf(stderr, "\n");
      });
      write_records_csv((out_dir / "records.csv").string(), recs);
      std::ofstream(out_dir / "plot.py") << plot_script(spec.mode, spec.params.alpha1, spec.params.alpha2);
      std::size_t failed = 0, diverged = 0;
      for (const auto& r : recs) {
        failed += r.status != "ok";
        diverged += r.diverged;
      }
      manifest["records"] = recs.size();
      manifest["failed_points"] = failed;
      manifest["diverged_points"] = diverged;
      if (command == "sweep") summary = {{"fits", summarize_sweep(cfg, recs)}};
      if (command == "collapse") summary = summarize_collapse(cfg, recs);
      if (command == "frontier") summary = summarize_frontier(cfg, recs);
    }
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 1;
  }
  manifest["warnings"] = warnings;
  manifest["summary"] = summary;
  manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit

int run_fit(const std::vector<std::string>& csvs, const std::string& axis_opt, int tail_count, bool joint,
            const std::string& manifest_path) {
  std::vector<std::pair<std::string, Series>> series;
  int default_tail = 0;
  try {
    for (const std::string& path : csvs) {
      const auto recs = read_records_csv(path);
      if (recs.empty()) throw std::invalid_argument(path + ": no records");
      std::string axis = axis_opt;
      if (axis == "auto") {
        if (recs.front().mode == SweepMode::n_sweep) axis = "n";
        else if (recs.front().mode == SweepMode::d_sweep) axis = "d";
        else throw std::invalid_argument(path + ": cannot infer the axis for mode " + to_string(recs.front().mode));
      }
      const int t = recs.front().solver == Solver::pinv ? kTailCountPinv : kTailCountNesterov;
      default_tail = default_tail == 0 ? t : std::min(default_tail, t);
      series.emplace_back(path + " (" + to_string(recs.front().kind) + " " + axis + ")",
                          to_series(recs, axis == "n" ? ScaleAxis::n : ScaleAxis::d));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  const int tc = tail_count > 0 ? tail_count : default_tail;
  std::vector<std::pair<std::string, ExponentFit>> fits;
  try {
    std::vector<Series> all;
    for (auto& [label, s] : series) {
      fits.emplace_back(label, loglog_fit_valid(s, tc));
      all.push_back(s);
    }
    if (joint && series.size() >= 2) fits.emplace_back("joint", joint_fit_valid(all, tc));
  } catch (const std::exception& e) {
    std::cerr << "fit failed: " << e.what() << "\n";
    return 1;
  }
  print_fit_table(fits);
  if (!manifest_path.empty()) {
    json m = json::object();
    if (fs::exists(manifest_path)) {
      std::ifstream in(manifest_path);
      m = json::parse(in);
    }
    for (const auto& [label, f] : fits) m["fits"].push_back(fit_json(label, f));
    std::ofstream(manifest_path) << m.dump(2) << "\n";
  }
  return 0;
}

void add_run_options(CLI::App* sub, RunOptions& o) {
  sub->add_option("-c,--config", o.config_path, "JSON run configuration (defaults to the preset)");
  sub->add_option("-o,--out", o.out, "Output directory (default: $SPARSE_SCALING_OUT/<name>-<hash> or runs/<name>-<hash>)");
  sub->add_flag("--overwrite", o.overwrite, "Allow writing into an existing non-empty output directory");
  sub->add_option("--preset", o.preset, "Scale preset")->check(CLI::IsMember({"desk", "paper"}));
  sub->add_option("--name", o.name, "Run name (part of every random stream key)");
  sub->add_option("--workers", o.workers, "Worker threads (0: all cores)");
  sub->add_option("--seeds", o.seeds, "Use seeds 0..n-1");
  sub->add_flag("-q,--quiet", o.quiet, "No progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse random-feature scaling laws: theory, sweeps and fits"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  double a1 = 1.0, a2 = 0.3, eta = 1.0, n_cond = 100.0;
  std::vector<double> ds{10, 100, 1000, 10000, 100000};
  std::vector<double> budgets{1e6, 1e8, 1e10};
  std::string format = "both";
  CLI::App* theory = app.add_subcommand("theory", "Closed-form predictions for (alpha1, alpha2)");
  theory->add_option("--alpha1", a1, "Sparsity exponent")->capture_default_str();
  theory->add_option("--alpha2", a2, "Amplitude exponent")->capture_default_str();
  theory->add_option("--d", ds, "Sample counts for the K(D) and loss tables");
  theory->add_option("--budget", budgets, "Compute budgets for the optimal allocation");
  theory->add_option("--eta", eta, "Step size for the GD failure law")->capture_default_str();
  theory->add_option("--n", n_cond, "Feature count for the condition-number model")->capture_default_str();
  theory->add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "csv", "both"}))->capture_default_str();

  RunOptions sweep_o, collapse_o, frontier_o, failure_o;
  add_run_options(app.add_subcommand("sweep", "N- or D-sweep with a power-law fit"), sweep_o);
  add_run_options(app.add_subcommand("collapse", "Scaling-collapse scan over N families"), collapse_o);
  add_run_options(app.add_subcommand("frontier", "Multi-N sweep and its compute envelope"), frontier_o);
  add_run_options(app.add_subcommand("gd-failure", "Rare-spike GD instability probabilities"), failure_o);

  std::vector<std::string> csvs;
  std::string axis = "auto", manifest;
  int tail = 0;
  bool joint = false;
  CLI::App* fit = app.add_subcommand("fit", "Fit exponents to existing records.csv files");
  fit->add_option("csv", csvs, "records.csv files, one series each")->required()->check(CLI::ExistingFile);
  fit->add_option("--axis", axis, "Scale axis")->check(CLI::IsMember({"auto", "n", "d"}))->capture_default_str();
  fit->add_option("--tail-count", tail, "Points per series (default: 6 for pinv, 4 for iterative solvers)");
  fit->add_flag("--joint", joint, "Also fit one shared exponent with per-series intercepts");
  fit->add_option("--manifest", manifest, "Append fit summaries to this JSON manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help, version or the error
    return code == 0 ? 0 : 2;
  }

  if (theory->parsed()) return run_theory(a1, a2, ds, budgets, eta, n_cond, format);
  if (app.got_subcommand("sweep")) return run_experiment("sweep", sweep_o);
  if (app.got_subcommand("collapse")) return run_experiment("collapse", collapse_o);
  if (app.got_subcommand("frontier")) return run_experiment("frontier", frontier_o);
  if (app.got_subcommand("gd-failure")) return run_experiment("gd-failure", failure_o);
  if (fit->parsed()) return run_fit(csvs, axis, tail, joint, manifest);
  return 0;
}
