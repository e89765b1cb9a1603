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

// Run configuration for the command-line tool: a single JSON document, resolved
// against a scale preset and validated before anything is sampled or written.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <sparse_scaling/datagen.hpp>
#include <sparse_scaling/fitting.hpp>
#include <sparse_scaling/rng.hpp>
#include <sparse_scaling/sweep.hpp>
#include <sparse_scaling/theory.hpp>

namespace sparse_scaling::cli {

using json = nlohmann::json;

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Geometric integer grid from start to stop (inclusive), count points, rounded and deduplicated.
inline std::vector<Index> geometric_grid(double start, double stop, int count) {
  if (!(start > 0.0) || !(stop >= start) || count < 1) throw ConfigError("geometric grid needs 0 < start <= stop and count >= 1");
  std::vector<Index> out;
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    const Index v = static_cast<Index>(std::llround(start * std::pow(stop / start, t)));
    if (out.empty() || v != out.back()) out.push_back(v);
  }
  return out;
}

struct RunConfig {
  std::string command = "sweep";  // sweep | collapse | frontier | gd-failure
  std::string name;
  std::string preset = "desk";    // desk | paper

  // data model
  DataKind kind = DataKind::sparse;
  double alpha1 = 1.0;
  double alpha2 = 0.3;
  double alpha = 2.3;  // dense baseline
  Index m = 10000;
  double teacher_std = 1.0;

  // model and solver
  Activation activation = Activation::linear;
  Solver solver = Solver::pinv;
  SolverSettings settings;
  Index n_test = 0;

  // sweep
  std::string axis = "n";  // n | d
  std::vector<Index> n_values;
  std::vector<Index> d_values;
  Index fixed_n = 0;
  Index fixed_d = 0;

  // collapse: families of N, each scanned over xi with D = (xi N)^{alpha1+1}
  std::vector<Index> families;
  std::vector<double> xi_values;

  // frontier: families of N, each with a geometric D range
  Index frontier_d_min = 0;
  double frontier_d_max_factor = 0.0;  // largest D = factor * N^{alpha1+1}
  int frontier_d_count = 0;

  // gd-failure
  std::vector<Index> failure_d;
  std::vector<Index> failure_trials;
  double epsilon = 1.0005;

  std::vector<std::uint64_t> seeds;
  int tail_count = 0;  // 0: solver default
  int workers = 0;
  double memory_budget_gb = 4.0;

  SparsityParams params() const {
    return kind == DataKind::sparse ? SparsityParams{alpha1, alpha2, m} : dense_baseline_params(alpha, m);
  }

  int resolved_tail_count() const {
    if (tail_count > 0) return tail_count;
    return solver == Solver::pinv ? kTailCountPinv : kTailCountNesterov;
  }
};

namespace detail {

template <class T>
std::vector<T> read_list(const json& j, const char* what) {
  if (j.is_array()) return j.get<std::vector<T>>();
  if (j.is_object() && j.contains("geometric")) {
    const json& g = j.at("geometric");
    const auto v = geometric_grid(g.at("start").get<double>(), g.at("stop").get<double>(), g.at("count").get<int>());
    return std::vector<T>(v.begin(), v.end());
  }
  throw ConfigError(std::string(what) + ": expected a list or {\"geometric\": {start, stop, count}}");
}

inline std::vector<std::uint64_t> read_seeds(const json& j) {
  if (j.is_array()) return j.get<std::vector<std::uint64_t>>();
  if (j.is_object()) {
    const std::uint64_t start = j.value("start", std::uint64_t{0});
    const std::uint64_t count = j.at("count").get<std::uint64_t>();
    std::vector<std::uint64_t> out;
    for (std::uint64_t i = 0; i < count; ++i) out.push_back(start + i);
    return out;
  }
  throw ConfigError("seeds: expected a list or {\"start\", \"count\"}");
}

inline Solver parse_solver(const std::string& s) {
  if (s == "pinv") return Solver::pinv;
  if (s == "nesterov") return Solver::nesterov;
  if (s == "gd") return Solver::gd;
  throw ConfigError("solver.method must be pinv, nesterov or gd");
}

inline Activation parse_activation(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu" || s == "rectifier") return Activation::rectifier;
  throw ConfigError("activation must be linear or relu");
}

inline std::vector<std::uint64_t> seed_range(std::uint64_t count) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(i);
  return out;
}

}  // namespace detail

/// Fills every field the document leaves out from the preset for its command.
inline void apply_preset(RunConfig& c, const json& doc) {
  const bool desk = c.preset == "desk";
  const bool iterative = c.solver != Solver::pinv;
  auto missing = [&](const char* key) { return !doc.contains(key); };
  const json sweep = doc.value("sweep", json::object());

  if (c.command == "sweep") {
    if (!sweep.contains("n")) {
      c.n_values = iterative ? std::vector<Index>{4, 8, 16, 32, 64, 128, 256}
                             : std::vector<Index>{4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256};
    }
    if (!sweep.contains("d")) {
      c.d_values = iterative ? std::vector<Index>{10, 20, 40, 80, 160, 320, 640, 1280}
                             : std::vector<Index>{10, 14, 20, 28, 40, 56, 80, 112, 160, 224, 320, 448, 640, 896, 1280};
    }
    if (!sweep.contains("fixed_d")) c.fixed_d = desk ? 20000 : 50000;
    if (!sweep.contains("fixed_n")) c.fixed_n = desk ? 2000 : (iterative ? 8000 : 16000);
    if (missing("seeds")) c.seeds = detail::seed_range(desk || iterative ? 5 : 20);
    if (missing("n_test") && c.activation == Activation::rectifier) c.n_test = iterative ? 20000 : 50000;
  } else if (c.command == "collapse") {
    const json col = doc.value("collapse", json::object());
    if (!col.contains("families")) c.families = desk ? std::vector<Index>{48, 64, 96, 128} : std::vector<Index>{64, 128, 256, 512};
    if (!col.contains("xi")) c.xi_values = {0.1, 0.14, 0.2, 0.3, 0.4, 0.5, 0.56, 0.65, 0.8, 1.0, 1.5, 2.0, 2.5};
    if (missing("seeds")) c.seeds = detail::seed_range(desk ? 200 : 1000);
  } else if (c.command == "frontier") {
    const json fr = doc.value("frontier", json::object());
    if (!fr.contains("families")) c.families = desk ? std::vector<Index>{16, 23, 32, 45, 64, 90, 128} : std::vector<Index>{32, 45, 64, 90, 128, 181, 256};
    if (!fr.contains("d_min")) c.frontier_d_min = 16;
    if (!fr.contains("d_max_factor")) c.frontier_d_max_factor = 4.0;
    if (!fr.contains("d_count")) c.frontier_d_count = 16;
    if (missing("seeds")) c.seeds = detail::seed_range(desk ? 20 : 50);
  } else if (c.command == "gd-failure") {
    const json gf = doc.value("gd_failure", json::object());
    if (!doc.contains("data")) {
      c.alpha1 = 2.0;
      c.alpha2 = -1.2;
      c.m = 5000;
    }
    if (!gf.contains("d")) c.failure_d = desk ? std::vector<Index>{500, 1000, 2000} : std::vector<Index>{500, 1000, 2000, 5000, 10000};
    if (!gf.contains("trials"))
      c.failure_trials = desk ? std::vector<Index>{500, 1000, 2000} : std::vector<Index>{500, 1000, 2000, 3000, 4000};
    if (missing("seeds")) c.seeds = {0};
  }
}

/// Parses and resolves a configuration document. Throws ConfigError naming the violated rule.
inline RunConfig parse_config(const json& doc, const std::string& command) {
  RunConfig c;
  try {
    c.command = doc.value("command", command);
    if (c.command != command) throw ConfigError("config is for '" + c.command + "' but the subcommand is '" + command + "'");
    c.preset = doc.value("preset", std::string("desk"));
    if (c.preset != "desk" && c.preset != "paper") throw ConfigError("preset must be desk or paper");
    c.name = doc.value("name", command);
    if (c.name.empty()) throw ConfigError("name must not be empty");

    if (doc.contains("data")) {
      const json& d = doc.at("data");
      const std::string kind = d.value("kind", std::string("sparse"));
      if (kind == "sparse") c.kind = DataKind::sparse;
      else if (kind == "dense") c.kind = DataKind::dense_baseline;
      else throw ConfigError("data.kind must be sparse or dense");
      c.alpha1 = d.value("alpha1", c.alpha1);
      c.alpha2 = d.value("alpha2", c.alpha2);
      c.alpha = d.value("alpha", c.alpha1 + c.alpha2 + 1.0);
      c.m = d.value("m", c.m);
      c.teacher_std = d.value("teacher_std", c.teacher_std);
    }
    c.activation = detail::parse_activation(doc.value("activation", std::string("linear")));
    if (doc.contains("solver")) {
      const json& s = doc.at("solver");
      c.solver = detail::parse_solver(s.value("method", std::string("pinv")));
      c.settings.rtol = s.value("rtol", c.settings.rtol);
      c.settings.tol = s.value("tol", c.settings.tol);
      c.settings.max_iter = s.value("max_iter", c.settings.max_iter);
      c.settings.eta = s.value("eta", c.settings.eta);
      c.settings.divergence_threshold = s.value("divergence_threshold", c.settings.divergence_threshold);
      c.settings.power_steps = s.value("power_steps", c.settings.power_steps);
    }
    c.n_test = doc.value("n_test", c.n_test);
    c.epsilon = doc.value("epsilon", c.epsilon);
    c.tail_count = doc.value("tail_count", 0);
    c.workers = doc.value("workers", 0);
    c.memory_budget_gb = doc.value("memory_budget_gb", c.memory_budget_gb);

    apply_preset(c, doc);

    if (doc.contains("seeds")) c.seeds = detail::read_seeds(doc.at("seeds"));
    if (doc.contains("sweep")) {
      const json& s = doc.at("sweep");
      c.axis = s.value("axis", c.axis);
      if (s.contains("n")) c.n_values = detail::read_list<Index>(s.at("n"), "sweep.n");
      if (s.contains("d")) c.d_values = detail::read_list<Index>(s.at("d"), "sweep.d");
      c.fixed_n = s.value("fixed_n", c.fixed_n);
      c.fixed_d = s.value("fixed_d", c.fixed_d);
    }
    if (doc.contains("collapse")) {
      const json& s = doc.at("collapse");
      if (s.contains("families")) c.families = detail::read_list<Index>(s.at("families"), "collapse.families");
      if (s.contains("xi")) c.xi_values = s.at("xi").get<std::vector<double>>();
    }
    if (doc.contains("frontier")) {
      const json& s = doc.at("frontier");
      if (s.contains("families")) c.families = detail::read_list<Index>(s.at("families"), "frontier.families");
      c.frontier_d_min = s.value("d_min", c.frontier_d_min);
      c.frontier_d_max_factor = s.value("d_max_factor", c.frontier_d_max_factor);
      c.frontier_d_count = s.value("d_count", c.frontier_d_count);
    }
    if (doc.contains("gd_failure")) {
      const json& s = doc.at("gd_failure");
      if (s.contains("d")) c.failure_d = detail::read_list<Index>(s.at("d"), "gd_failure.d");
      if (s.contains("trials")) c.failure_trials = detail::read_list<Index>(s.at("trials"), "gd_failure.trials");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

/// (N, D) pairs a sweep-type command will run.
inline std::vector<GridPoint> build_grid(const RunConfig& c) {
  std::vector<GridPoint> g;
  if (c.command == "sweep") {
    if (c.axis == "n")
      for (Index n : c.n_values) g.push_back({n, c.fixed_d});
    else
      for (Index d : c.d_values) g.push_back({c.fixed_n, d});
  } else if (c.command == "collapse") {
    for (Index n : c.families)
      for (double xi : c.xi_values)
        g.push_back({n, static_cast<Index>(std::llround(std::pow(xi * static_cast<double>(n), c.alpha1 + 1.0)))});
  } else if (c.command == "frontier") {
    for (Index n : c.families) {
      const double top = c.frontier_d_max_factor * std::pow(static_cast<double>(n), c.alpha1 + 1.0);
      for (Index d : geometric_grid(static_cast<double>(c.frontier_d_min), std::max(top, static_cast<double>(c.frontier_d_min)), c.frontier_d_count))
        g.push_back({n, d});
    }
  }
  return g;
}

inline SweepSpec to_spec(const RunConfig& c) {
  SweepSpec s;
  s.name = c.name;
  s.mode = c.command == "collapse" ? SweepMode::collapse
         : c.command == "frontier" ? SweepMode::frontier
         : c.axis == "n"           ? SweepMode::n_sweep
                                   : SweepMode::d_sweep;
  s.kind = c.kind;
  s.params = c.params();
  s.grid = build_grid(c);
  s.activation = c.activation;
  s.solver = c.solver;
  s.settings = c.settings;
  s.seeds = c.seeds;
  s.n_test = c.n_test;
  s.epsilon = c.epsilon;
  s.teacher_std = c.teacher_std;
  s.workers = c.workers;
  s.memory_budget_gb = c.memory_budget_gb;
  return s;
}

/// Checks every module precondition the run depends on.
inline void validate(const RunConfig& c) {
  if (c.seeds.empty()) throw ConfigError("seeds: the seed list must not be empty");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    throw ConfigError("seeds: duplicate seed identifiers");
  if (!(c.memory_budget_gb > 0.0)) throw ConfigError("memory_budget_gb must be > 0");
  if (c.kind == DataKind::dense_baseline && !(c.alpha > 0.0)) throw ConfigError("data.alpha must be > 0 for the dense baseline");
  try {
    c.params().validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  if (!(c.teacher_std > 0.0)) throw ConfigError("data.teacher_std must be > 0");
  if (c.tail_count < 0 || c.tail_count == 1) throw ConfigError("tail_count must be >= 2");

  if (c.command == "gd-failure") {
    if (!failure_law(c.params()).applicable) throw ConfigError("gd-failure: requires alpha2 < -1 and alpha1 + alpha2 + 1 > 0");
    if (c.kind != DataKind::sparse) throw ConfigError("gd-failure: requires sparse data");
    if (!(c.epsilon > 1.0)) throw ConfigError("epsilon must be > 1");
    if (c.failure_d.empty() || c.failure_d.size() != c.failure_trials.size())
      throw ConfigError("gd_failure: d and trials must be non-empty and of equal length");
    for (std::size_t i = 0; i < c.failure_d.size(); ++i)
      if (c.failure_d[i] < 1 || c.failure_trials[i] < 1) throw ConfigError("gd_failure: D and trials must be >= 1");
    return;
  }
  if (c.command == "sweep") {
    if (c.axis != "n" && c.axis != "d") throw ConfigError("sweep.axis must be n or d");
    if (c.axis == "n" && (c.n_values.empty() || c.fixed_d < 1)) throw ConfigError("sweep: need a non-empty N list and fixed_d >= 1");
    if (c.axis == "d" && (c.d_values.empty() || c.fixed_n < 1)) throw ConfigError("sweep: need a non-empty D list and fixed_n >= 1");
  }
  if (c.command == "collapse") {
    if (c.kind != DataKind::sparse || !(c.alpha1 > 0.0)) throw ConfigError("collapse: requires sparse data with alpha1 > 0");
    if (c.families.empty() || c.xi_values.empty()) throw ConfigError("collapse: families and xi must be non-empty");
    for (double x : c.xi_values)
      if (!(x > 0.0)) throw ConfigError("collapse: xi values must be > 0");
  }
  if (c.command == "frontier") {
    if (c.families.size() < 2) throw ConfigError("frontier: needs at least two N families");
    if (c.frontier_d_min < 1 || !(c.frontier_d_max_factor > 0.0) || c.frontier_d_count < 2)
      throw ConfigError("frontier: need d_min >= 1, d_max_factor > 0 and d_count >= 2");
  }
  try {
    to_spec(c).validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

/// Canonical JSON of a resolved configuration; its hash names the run.
inline json to_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["name"] = c.name;
  j["preset"] = c.preset;
  j["data"] = {{"kind", c.kind == DataKind::sparse ? "sparse" : "dense"}, {"alpha1", c.params().alpha1},
               {"alpha2", c.params().alpha2}, {"m", c.m}, {"teacher_std", c.teacher_std}};
  j["activation"] = to_string(c.activation);
  j["solver"] = {{"method", to_string(c.solver)},
                 {"rtol", c.settings.rtol},
                 {"tol", c.settings.tol},
                 {"max_iter", c.settings.max_iter},
                 {"eta", c.settings.eta},
                 {"divergence_threshold", c.settings.divergence_threshold},
                 {"power_steps", c.settings.power_steps}};
  j["n_test"] = c.n_test;
  j["seeds"] = c.seeds;
  j["tail_count"] = c.resolved_tail_count();
  j["memory_budget_gb"] = c.memory_budget_gb;
  if (c.command == "gd-failure") {
    j["epsilon"] = c.epsilon;
    j["gd_failure"] = {{"d", c.failure_d}, {"trials", c.failure_trials}};
  } else {
    json grid = json::array();
    for (const auto& [n, d] : build_grid(c)) grid.push_back({n, d});
    j["grid"] = grid;
  }
  return j;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

}  // namespace sparse_scaling::cli
