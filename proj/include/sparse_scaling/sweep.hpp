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

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "datagen.hpp"
#include "evaluation.hpp"
#include "features.hpp"
#include "rng.hpp"
#include "solvers.hpp"
#include "theory.hpp"

namespace sparse_scaling {

enum class SweepMode { n_sweep, d_sweep, collapse, frontier, gd_failure };

inline const char* to_string(SweepMode m) {
  switch (m) {
    case SweepMode::n_sweep: return "n-sweep";
    case SweepMode::d_sweep: return "d-sweep";
    case SweepMode::collapse: return "collapse";
    case SweepMode::frontier: return "frontier";
    case SweepMode::gd_failure: return "gd-failure";
  }
  return "?";
}

enum class Solver { pinv, nesterov, gd };

inline const char* to_string(Solver s) {
  switch (s) {
    case Solver::pinv: return "pinv";
    case Solver::nesterov: return "nesterov";
    case Solver::gd: return "gd";
  }
  return "?";
}

struct SolverSettings {
  double rtol = 1e-10;
  double tol = 1e-9;
  Index max_iter = 500000;
  double eta = 1.0;  // gd step on the Phi Phi^T / D scale
  double divergence_threshold = 1e12;
  int power_steps = 50;
};

using GridPoint = std::pair<Index, Index>;  // (N, D)

struct SweepSpec {
  std::string name = "sweep";  // folded into every stream key
  SweepMode mode = SweepMode::n_sweep;
  DataKind kind = DataKind::sparse;
  SparsityParams params;  // dense baseline: dense_baseline_params(alpha, m)
  std::vector<GridPoint> grid;
  Activation activation = Activation::linear;
  Solver solver = Solver::pinv;
  SolverSettings settings;
  std::vector<std::uint64_t> seeds;
  Index n_test = 0;  // 0: exact evaluation only
  double epsilon = 1.0005;
  double teacher_std = 1.0;
  int workers = 0;  // 0: hardware concurrency
  double memory_budget_gb = 4.0;

  std::uint64_t experiment_key() const { return fnv1a64(name); }

  /// Rough peak bytes of one worker: embeddings of one seed plus the largest feature block.
  double estimated_bytes_per_worker() const {
    std::map<Index, Index> max_d;
    for (const auto& [n, d] : grid) max_d[n] = std::max(max_d[n], d);
    double maps = 0.0, dense_features = 0.0, largest_phi = 0.0;
    for (const auto& [n, d] : max_d) {
      maps += 8.0 * static_cast<double>(n) * static_cast<double>(params.m);
      dense_features += 8.0 * static_cast<double>(n) * static_cast<double>(d);
      largest_phi = std::max(largest_phi, 8.0 * static_cast<double>(n) * static_cast<double>(d));
    }
    const double data = kind == DataKind::dense_baseline ? 8.0 * static_cast<double>(params.m) * 256.0 : 0.0;
    return maps + data + (kind == DataKind::dense_baseline ? dense_features : 0.0) + 3.0 * largest_phi;
  }

  int resolved_workers() const {
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const int w = workers > 0 ? workers : hw;
    return std::max(1, std::min<int>(w, static_cast<int>(seeds.size())));
  }

  void validate() const {
    params.validate();
    if (grid.empty()) throw std::invalid_argument("sweep: grid must not be empty");
    if (seeds.empty()) throw std::invalid_argument("sweep: seed list must not be empty");
    if (n_test < 0) throw std::invalid_argument("sweep: n_test must be >= 0");
    for (const auto& [n, d] : grid)
      if (n < 1 || d < 1) throw std::invalid_argument("sweep: grid entries need N >= 1 and D >= 1");
    if (kind == DataKind::dense_baseline && params.alpha1 != -1.0)
      throw std::invalid_argument("sweep: dense baseline requires alpha1 = -1");
    if (activation == Activation::rectifier && n_test < 1)
      throw std::invalid_argument("sweep: the rectifier map needs n_test >= 1 (no exact loss exists)");
    if (solver == Solver::pinv && !(settings.rtol > 0.0)) throw std::invalid_argument("sweep: rtol must be > 0");
    if (solver != Solver::pinv && !(settings.tol > 0.0)) throw std::invalid_argument("sweep: tol must be > 0");
    if (solver == Solver::gd && !(settings.eta > 0.0)) throw std::invalid_argument("sweep: eta must be > 0");
    if (settings.max_iter < 1) throw std::invalid_argument("sweep: max_iter must be >= 1");
    if (settings.power_steps < 1) throw std::invalid_argument("sweep: power_steps must be >= 1");
    const double need = estimated_bytes_per_worker() * resolved_workers();
    if (need > memory_budget_gb * 1e9)
      throw std::invalid_argument("sweep: estimated memory " + std::to_string(need / 1e9) + " GB exceeds budget of " +
                                  std::to_string(memory_budget_gb) + " GB");
  }
};

struct SweepRecord {
  SweepMode mode = SweepMode::n_sweep;
  DataKind kind = DataKind::sparse;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  Activation activation = Activation::linear;
  Solver solver = Solver::pinv;
  Index n = 0;
  Index d = 0;
  std::uint64_t seed = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();        // MC when run, else exact
  double loss_exact = std::numeric_limits<double>::quiet_NaN();  // linear map only
  double loss_stderr = std::numeric_limits<double>::quiet_NaN(); // MC standard error
  double compute = 0.0;
  double xi = 0.0;
  bool diverged = false;
  bool converged = false;
  Index iterations = 0;
  std::string status = "ok";  // or the error message of a failed point

  bool valid() const { return status == "ok" && !diverged && std::isfinite(loss) && loss > 0.0; }
};

/// Warnings for grids where truncation at m distorts the power-law tails.
inline std::vector<std::string> truncation_warnings(const SparsityParams& p, const std::vector<GridPoint>& grid) {
  std::vector<std::string> out;
  Index max_n = 0, max_d = 0;
  for (const auto& [n, d] : grid) {
    max_n = std::max(max_n, n);
    max_d = std::max(max_d, d);
  }
  const double tenth = static_cast<double>(p.m) / 10.0;
  if (static_cast<double>(max_n) > tenth)
    out.push_back("N = " + std::to_string(max_n) + " exceeds m/10 = " + std::to_string(p.m / 10) +
                  "; truncation distorts the parameter-limited tail");
  if (p.alpha1 > 0.0) {
    const double k = k_of_d(p.alpha1, static_cast<double>(max_d));
    if (k > tenth)
      out.push_back("K(D) = " + std::to_string(k) + " at D = " + std::to_string(max_d) + " exceeds m/10 = " +
                    std::to_string(p.m / 10) + "; truncation distorts the data-limited tail");
  }
  return out;
}

namespace detail {

struct PointOutcome {
  SolveResult solve;
  std::string error;
};

inline SolveResult run_solver(const SweepSpec& spec, const MatrixXd& phi, const VectorXd& y) {
  switch (spec.solver) {
    case Solver::pinv: return minnorm_pinv(phi, y, spec.settings.rtol);
    case Solver::nesterov: {
      NesterovOptions opt;
      opt.tol = spec.settings.tol;
      opt.max_iter = spec.settings.max_iter;
      opt.power_steps = spec.settings.power_steps;
      return nesterov_run(phi, y, opt);
    }
    case Solver::gd:
      return gd_run(phi, y, spec.settings.eta, spec.settings.max_iter, spec.settings.divergence_threshold,
                    spec.settings.tol);
  }
  throw std::logic_error("unknown solver");
}

// Everything for one seed. Grid points share the teacher, the embedding for each N,
// the dataset for each D and the test set, so curves within a seed are coupled the
// same way regardless of which other points are requested.
inline std::vector<SweepRecord> run_seed(const SweepSpec& spec, std::uint64_t seed) {
  const SeedContext ctx{spec.experiment_key(), seed};
  const SparsityParams& p = spec.params;
  const VectorXd w = sample_teacher(p.m, ctx, spec.teacher_std);

  std::map<Index, FeatureMap> maps;
  auto map_for = [&](Index n) -> const FeatureMap& {
    auto it = maps.find(n);
    if (it == maps.end()) it = maps.emplace(n, sample_embedding(n, p.m, ctx, spec.activation)).first;
    return it->second;
  };

  const std::size_t npts = spec.grid.size();
  std::vector<SweepRecord> recs(npts);
  std::vector<VectorXd> thetas(npts);

  auto solve_point = [&](std::size_t i, const MatrixXd& phi, const VectorXd& y) {
    SweepRecord& r = recs[i];
    try {
      const SolveResult s = run_solver(spec, phi, y);
      r.diverged = s.diverged;
      r.converged = s.converged;
      r.iterations = s.iterations;
      thetas[i] = s.theta;
      if (spec.activation == Activation::linear && s.theta.allFinite())
        r.loss_exact = population_loss_exact(p, w, effective_weights(map_for(r.n), s.theta));
    } catch (const std::exception& e) {
      r.status = e.what();
    }
  };

  for (std::size_t i = 0; i < npts; ++i) {
    SweepRecord& r = recs[i];
    r.mode = spec.mode;
    r.kind = spec.kind;
    r.alpha1 = p.alpha1;
    r.alpha2 = p.alpha2;
    r.activation = spec.activation;
    r.solver = spec.solver;
    r.n = spec.grid[i].first;
    r.d = spec.grid[i].second;
    r.seed = seed;
    r.compute = compute_proxy(static_cast<double>(r.n), static_cast<double>(r.d));
    r.xi = collapse_variable(p, static_cast<double>(r.n), static_cast<double>(r.d));
  }

  if (spec.kind == DataKind::sparse) {
    std::map<Index, std::vector<std::size_t>> by_d;
    for (std::size_t i = 0; i < npts; ++i) by_d[spec.grid[i].second].push_back(i);
    for (const auto& [d, idx] : by_d) {
      const SparseMatrix x = sample_sparse_design(p, d, ctx);
      const VectorXd y = compute_labels(x, w);
      for (const std::size_t i : idx) {
        MatrixXd phi;
        try {
          phi = compute_features(map_for(spec.grid[i].first), x);
        } catch (const std::exception& e) {
          recs[i].status = e.what();
          continue;
        }
        solve_point(i, phi, y);
      }
    }
  } else {
    // Dense columns nest across D, so each N needs features only up to its largest D.
    std::map<Index, Index> max_d;
    for (const auto& [n, d] : spec.grid) max_d[n] = std::max(max_d[n], d);
    Index total_d = 0;
    for (const auto& [n, d] : max_d) total_d = std::max(total_d, d);
    std::map<Index, MatrixXd> feats;
    for (const auto& [n, d] : max_d) {
      map_for(n);
      feats[n].resize(n, d);
    }
    VectorXd y(total_d);
    const DenseColumnSource src = dense_source(p, ctx);
    constexpr Index kBlock = 256;
    MatrixXd xb;
    for (Index first = 0; first < total_d; first += kBlock) {
      const Index cols = std::min(kBlock, total_d - first);
      xb.resize(p.m, cols);
      src.fill(xb, first);
      y.segment(first, cols) = compute_labels(xb, w);
      for (auto& [n, f] : feats) {
        const Index upto = std::min(cols, f.cols() - first);
        if (upto <= 0) continue;
        f.middleCols(first, upto).noalias() = map_for(n).u() * xb.leftCols(upto);
      }
    }
    for (auto& [n, f] : feats) apply_activation(spec.activation, f);
    for (std::size_t i = 0; i < npts; ++i) {
      const auto [n, d] = spec.grid[i];
      solve_point(i, feats[n].leftCols(d), y.head(d));
    }
  }

  if (spec.n_test > 0) {
    std::map<Index, std::vector<std::size_t>> by_n;
    for (std::size_t i = 0; i < npts; ++i)
      if (recs[i].status == "ok" && thetas[i].size() > 0 && thetas[i].allFinite()) by_n[recs[i].n].push_back(i);
    std::vector<McRequest> reqs;
    std::vector<std::vector<std::size_t>> owners;
    for (const auto& [n, idx] : by_n) {
      McRequest req;
      req.map = &map_for(n);
      req.thetas.resize(n, static_cast<Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) req.thetas.col(static_cast<Index>(k)) = thetas[idx[k]];
      reqs.push_back(std::move(req));
      owners.push_back(idx);
    }
    if (!reqs.empty()) {
      const auto mc = test_loss_mc_multi(p, spec.kind, w, spec.n_test, ctx, reqs);
      for (std::size_t r = 0; r < owners.size(); ++r)
        for (std::size_t k = 0; k < owners[r].size(); ++k) {
          recs[owners[r][k]].loss = mc[r][k].mean;
          recs[owners[r][k]].loss_stderr = mc[r][k].std_error;
        }
    }
  } else {
    for (SweepRecord& r : recs) r.loss = r.loss_exact;
  }
  return recs;
}

}  // namespace detail

using SweepProgress = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every (grid point, seed) pair. Seeds are the unit of parallel work; the output is
/// ordered by grid point, then by position in the seed list, independent of scheduling.
inline std::vector<SweepRecord> run_sweep(const SweepSpec& spec, const SweepProgress& progress = nullptr) {
  spec.validate();
  const std::size_t jobs = spec.seeds.size();
  std::vector<std::vector<SweepRecord>> per_seed(jobs);
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex sink;
  auto worker = [&]() {
    while (true) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs) return;
      std::vector<SweepRecord> recs;
      try {
        recs = detail::run_seed(spec, spec.seeds[j]);
      } catch (const std::exception& e) {
        // Whole-seed failure (for example allocation); keep the grid with the message.
        recs.resize(spec.grid.size());
        for (std::size_t i = 0; i < spec.grid.size(); ++i) {
          recs[i].mode = spec.mode;
          recs[i].kind = spec.kind;
          recs[i].alpha1 = spec.params.alpha1;
          recs[i].alpha2 = spec.params.alpha2;
          recs[i].activation = spec.activation;
          recs[i].solver = spec.solver;
          recs[i].n = spec.grid[i].first;
          recs[i].d = spec.grid[i].second;
          recs[i].seed = spec.seeds[j];
          recs[i].compute = compute_proxy(static_cast<double>(recs[i].n), static_cast<double>(recs[i].d));
          recs[i].xi = collapse_variable(spec.params, static_cast<double>(recs[i].n), static_cast<double>(recs[i].d));
          recs[i].status = e.what();
        }
      }
      std::lock_guard<std::mutex> lock(sink);
      per_seed[j] = std::move(recs);
      ++done;
      if (progress) progress(done, jobs);
    }
  };
  const int nthreads = spec.resolved_workers();
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  std::vector<SweepRecord> out;
  out.reserve(jobs * spec.grid.size());
  for (std::size_t i = 0; i < spec.grid.size(); ++i)
    for (std::size_t j = 0; j < jobs; ++j) out.push_back(per_seed[j][i]);
  return out;
}

}  // namespace sparse_scaling
