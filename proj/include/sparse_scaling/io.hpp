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

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "datagen.hpp"
#include "fitting.hpp"
#include "gd_failure.hpp"
#include "sweep.hpp"

namespace sparse_scaling {

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan" || s.empty()) return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("csv: bad number '" + s + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Sweep records as CSV. The first fourteen columns are fixed; later columns are
// extras that older readers may ignore.

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {"mode", "alpha1", "alpha2", "activation", "solver", "N", "D",
                                                "seed", "loss", "loss_exact", "compute", "xi", "diverged",
                                                "iterations", "loss_stderr", "converged", "kind", "status"};
  return cols;
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <class E>
E parse_enum(const std::string& s, std::initializer_list<E> values, const char* what) {
  for (E v : values)
    if (s == to_string(v)) return v;
  throw std::invalid_argument(std::string("csv: unknown ") + what + " '" + s + "'");
}

}  // namespace detail

inline void write_records_csv(std::ostream& os, const std::vector<SweepRecord>& records) {
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
  for (const SweepRecord& r : records) {
    os << to_string(r.mode) << ',' << format_double(r.alpha1) << ',' << format_double(r.alpha2) << ','
       << to_string(r.activation) << ',' << to_string(r.solver) << ',' << r.n << ',' << r.d << ',' << r.seed << ','
       << format_double(r.loss) << ',' << format_double(r.loss_exact) << ',' << format_double(r.compute) << ','
       << format_double(r.xi) << ',' << (r.diverged ? 1 : 0) << ',' << r.iterations << ','
       << format_double(r.loss_stderr) << ',' << (r.converged ? 1 : 0) << ',' << to_string(r.kind) << ','
       << detail::csv_quote(r.status) << "\n";
  }
}

inline void write_records_csv(const std::string& path, const std::vector<SweepRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_records_csv(os, records);
}

inline std::vector<SweepRecord> read_records_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("csv: empty input");
  const std::vector<std::string> header = detail::csv_split(line);
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < 14; ++i)
    if (i >= header.size() || header[i] != cols[i])
      throw std::invalid_argument("csv: expected column '" + cols[i] + "' at position " + std::to_string(i + 1));
  auto find = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_stderr = find("loss_stderr"), c_conv = find("converged"), c_kind = find("kind"), c_status = find("status");
  std::vector<SweepRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = detail::csv_split(line);
    if (f.size() < 14) throw std::invalid_argument("csv: line " + std::to_string(lineno) + " has too few fields");
    SweepRecord r;
    r.mode = detail::parse_enum(f[0], {SweepMode::n_sweep, SweepMode::d_sweep, SweepMode::collapse, SweepMode::frontier,
                                       SweepMode::gd_failure}, "mode");
    r.alpha1 = parse_double(f[1]);
    r.alpha2 = parse_double(f[2]);
    r.activation = detail::parse_enum(f[3], {Activation::linear, Activation::rectifier}, "activation");
    r.solver = detail::parse_enum(f[4], {Solver::pinv, Solver::nesterov, Solver::gd}, "solver");
    r.n = std::stoll(f[5]);
    r.d = std::stoll(f[6]);
    r.seed = std::stoull(f[7]);
    r.loss = parse_double(f[8]);
    r.loss_exact = parse_double(f[9]);
    r.compute = parse_double(f[10]);
    r.xi = parse_double(f[11]);
    r.diverged = f[12] == "1";
    r.iterations = std::stoll(f[13]);
    auto opt = [&](int c) { return c >= 0 && static_cast<std::size_t>(c) < f.size() ? f[static_cast<std::size_t>(c)] : std::string(); };
    r.loss_stderr = parse_double(opt(c_stderr));
    r.converged = opt(c_conv) == "1";
    r.kind = opt(c_kind) == "dense" || (c_kind < 0 && r.alpha1 == -1.0) ? DataKind::dense_baseline : DataKind::sparse;
    r.status = c_status >= 0 ? opt(c_status) : "ok";
    out.push_back(r);
  }
  return out;
}

inline std::vector<SweepRecord> read_records_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_records_csv(is);
}

// ---------------------------------------------------------------------------
// Dataset files. Text, one item per line, rows 1-based:
//
//   sparse-scaling-dataset 1
//   <M> <D> <alpha1> <alpha2> <sparse|dense> <seed>
//   teacher
//   <w_1>
//   ...
//   <w_M>
//   column <d> <nnz> <y_d>          (d is 1-based; repeated D times)
//   <row> <value>                    (nnz lines, rows increasing)

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  os << "sparse-scaling-dataset 1\n";
  os << ds.m() << ' ' << ds.d() << ' ' << format_double(ds.params.alpha1) << ' ' << format_double(ds.params.alpha2)
     << ' ' << to_string(ds.kind) << ' ' << ds.seed << "\n";
  os << "teacher\n";
  for (Index j = 0; j < ds.teacher_w.size(); ++j) os << format_double(ds.teacher_w[j]) << "\n";
  for (Index c = 0; c < ds.d(); ++c) {
    if (ds.kind == DataKind::sparse) {
      const Index nnz = ds.x_sparse.outerIndexPtr()[c + 1] - ds.x_sparse.outerIndexPtr()[c];
      os << "column " << c + 1 << ' ' << nnz << ' ' << format_double(ds.labels_y[c]) << "\n";
      for (SparseMatrix::InnerIterator it(ds.x_sparse, c); it; ++it)
        os << it.row() + 1 << ' ' << format_double(it.value()) << "\n";
    } else {
      os << "column " << c + 1 << ' ' << ds.m() << ' ' << format_double(ds.labels_y[c]) << "\n";
      for (Index j = 0; j < ds.m(); ++j) os << j + 1 << ' ' << format_double(ds.x_dense(j, c)) << "\n";
    }
  }
}

inline Dataset read_dataset(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "sparse-scaling-dataset" || version != 1) throw std::invalid_argument("dataset: unrecognised header");
  Dataset ds;
  Index m = 0, d = 0;
  std::string a1, a2, kind, word;
  is >> m >> d >> a1 >> a2 >> kind >> ds.seed;
  if (!is || m < 1 || d < 1) throw std::invalid_argument("dataset: bad dimensions");
  ds.params = SparsityParams{parse_double(a1), parse_double(a2), m};
  if (kind == "sparse") ds.kind = DataKind::sparse;
  else if (kind == "dense") ds.kind = DataKind::dense_baseline;
  else throw std::invalid_argument("dataset: unknown kind '" + kind + "'");
  is >> word;
  if (word != "teacher") throw std::invalid_argument("dataset: expected 'teacher'");
  ds.teacher_w.resize(m);
  for (Index j = 0; j < m; ++j) {
    is >> word;
    ds.teacher_w[j] = parse_double(word);
  }
  ds.labels_y.resize(d);
  std::vector<detail::Entry> entries;
  if (ds.kind == DataKind::dense_baseline) ds.x_dense = MatrixXd::Zero(m, d);
  for (Index c = 0; c < d; ++c) {
    Index idx = 0, nnz = 0;
    is >> word >> idx >> nnz;
    if (word != "column" || idx != c + 1) throw std::invalid_argument("dataset: column " + std::to_string(c + 1) + " missing");
    is >> word;
    ds.labels_y[c] = parse_double(word);
    Index prev = 0;
    for (Index k = 0; k < nnz; ++k) {
      Index row = 0;
      is >> row >> word;
      if (!is || row < 1 || row > m || row <= prev) throw std::invalid_argument("dataset: bad row in column " + std::to_string(c + 1));
      prev = row;
      const double v = parse_double(word);
      if (ds.kind == DataKind::sparse) entries.push_back({c, row - 1, v});
      else ds.x_dense(row - 1, c) = v;
    }
  }
  if (ds.kind == DataKind::sparse) {
    // entries are column-major here; assemble_columns keeps their order within each column
    ds.x_sparse = detail::assemble_columns(m, d, entries);
  }
  return ds;
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_dataset(os, ds);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_dataset(is);
}

// ---------------------------------------------------------------------------
// Failure tables: D,failures,trials,p_hat,ci_lower,ci_upper

inline void write_failures_csv(std::ostream& os, const std::vector<FailureRow>& rows) {
  os << "D,failures,trials,p_hat,ci_lower,ci_upper\n";
  for (const FailureRow& r : rows)
    os << r.d << ',' << r.failures << ',' << r.trials << ',' << format_double(r.p_hat) << ','
       << format_double(r.ci.lower) << ',' << format_double(r.ci.upper) << "\n";
}

inline void write_failures_csv(const std::string& path, const std::vector<FailureRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_failures_csv(os, rows);
}

// ---------------------------------------------------------------------------
// Plot scripts. Each is a standalone matplotlib program reading records.csv
// (failures.csv for the GD failure study) from its own directory.

inline std::string plot_script(SweepMode mode, double alpha1, double alpha2) {
  std::ostringstream s;
  s << "#!/usr/bin/env python3\n"
       "# Generated plot script; reads records.csv from its own directory.\n"
       "import csv, math, os, sys\n"
       "from collections import defaultdict\n"
       "import matplotlib\n"
       "matplotlib.use('Agg')\n"
       "import matplotlib.pyplot as plt\n\n"
       "here = os.path.dirname(os.path.abspath(__file__))\n"
       "rows = []\n"
       "if os.path.exists(os.path.join(here, 'records.csv')):\n"
       "    rows = [r for r in csv.DictReader(open(os.path.join(here, 'records.csv'))) if r['status'] == 'ok' and r['diverged'] == '0']\n"
       "alpha1, alpha2 = " << format_double(alpha1) << ", " << format_double(alpha2) << "\n"
       "def mean_by(key):\n"
       "    acc = defaultdict(list)\n"
       "    for r in rows:\n"
       "        if r['loss'] != 'nan':\n"
       "            acc[key(r)].append(float(r['loss']))\n"
       "    return {k: sum(v) / len(v) for k, v in acc.items()}\n\n";
  switch (mode) {
    case SweepMode::n_sweep:
    case SweepMode::d_sweep: {
      const char* axis = mode == SweepMode::n_sweep ? "N" : "D";
      s << "m = mean_by(lambda r: int(r['" << axis << "']))\n"
           "xs = sorted(m)\n"
           "plt.loglog(xs, [m[x] for x in xs], 'o-')\n"
           "plt.xlabel('" << axis << "')\n"
           "plt.ylabel('test loss')\n"
           "out = os.path.join(here, 'sweep.png')\n";
      break;
    }
    case SweepMode::collapse:
      s << "an = alpha1 + alpha2 + 1\n"
           "m = mean_by(lambda r: (int(r['N']), int(r['D'])))\n"
           "fam = defaultdict(list)\n"
           "for (n, d), l in m.items():\n"
           "    fam[n].append((d ** (1 / (alpha1 + 1)) / n, l * n ** an))\n"
           "for n in sorted(fam):\n"
           "    pts = sorted(fam[n])\n"
           "    plt.loglog([p[0] for p in pts], [p[1] for p in pts], 'o-', label=f'N={n}')\n"
           "xc = 1 / math.gamma(alpha1 / (1 + alpha1))\n"
           "plt.axvline(xc, color='k', ls='--', label='xi_crit')\n"
           "plt.xlabel('xi = D^(1/(alpha1+1)) / N')\n"
           "plt.ylabel('loss * N^alpha_N')\n"
           "plt.legend()\n"
           "out = os.path.join(here, 'collapse.png')\n";
      break;
    case SweepMode::frontier:
      s << "m = mean_by(lambda r: (int(r['N']), int(r['D'])))\n"
           "fam = defaultdict(list)\n"
           "for (n, d), l in m.items():\n"
           "    fam[n].append((n * d * min(n, d), l))\n"
           "for n in sorted(fam):\n"
           "    pts = sorted(fam[n])\n"
           "    plt.loglog([p[0] for p in pts], [p[1] for p in pts], '-', alpha=0.6, label=f'N={n}')\n"
           "pts = sorted(p for v in fam.values() for p in v)\n"
           "env, best = [], float('inf')\n"
           "for c, l in pts:\n"
           "    best = min(best, l)\n"
           "    env.append((c, best))\n"
           "plt.loglog([p[0] for p in env], [p[1] for p in env], 'k-', lw=2, label='envelope')\n"
           "plt.xlabel('C = N D min(N, D)')\n"
           "plt.ylabel('test loss')\n"
           "plt.legend(fontsize='small')\n"
           "out = os.path.join(here, 'frontier.png')\n";
      break;
    case SweepMode::gd_failure:
      s << "rows = list(csv.DictReader(open(os.path.join(here, 'failures.csv'))))\n"
           "d = [float(r['D']) for r in rows]\n"
           "p = [float(r['p_hat']) for r in rows]\n"
           "lo = [float(r['p_hat']) - float(r['ci_lower']) for r in rows]\n"
           "hi = [float(r['ci_upper']) - float(r['p_hat']) for r in rows]\n"
           "plt.errorbar(d, p, yerr=[lo, hi], fmt='o-', capsize=3)\n"
           "plt.xscale('log')\n"
           "plt.yscale('log')\n"
           "plt.xlabel('D')\n"
           "plt.ylabel('P(lambda_max > epsilon)')\n"
           "out = os.path.join(here, 'failures.png')\n";
      break;
  }
  s << "if out:\n"
       "    plt.savefig(out, dpi=150, bbox_inches='tight')\n"
       "    print('wrote', out)\n";
  return s.str();
}

}  // namespace sparse_scaling
