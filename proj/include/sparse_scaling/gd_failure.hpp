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

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "datagen.hpp"
#include "solvers.hpp"
#include "theory.hpp"

namespace sparse_scaling {

struct WilsonInterval {
  double lower = 0.0;
  double upper = 1.0;
};

/// Wilson score interval for k successes in n trials; z = 1.96 gives 95%.
inline WilsonInterval wilson_interval(Index k, Index n, double z = 1.959963984540054) {
  if (n < 1 || k < 0 || k > n) throw std::invalid_argument("wilson_interval: need 0 <= k <= n and n >= 1");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

inline constexpr Index kDirectEigenLimit = 2000;

/// lambda_max(X X^T / D) using only the rows that fired at least once.
inline double design_lmax(const SparseMatrix& x, int power_steps = 500) {
  const std::vector<std::int64_t> rows = active_rows(x);
  const Index k = static_cast<Index>(rows.size());
  if (k == 0) return 0.0;
  std::vector<std::int64_t> slot(static_cast<std::size_t>(x.rows()), -1);
  for (Index i = 0; i < k; ++i) slot[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])] = i;
  MatrixXd gram = MatrixXd::Zero(k, k);
  for (Index c = 0; c < x.cols(); ++c)
    for (SparseMatrix::InnerIterator a(x, c); a; ++a)
      for (SparseMatrix::InnerIterator b(x, c); b; ++b)
        gram(slot[static_cast<std::size_t>(a.row())], slot[static_cast<std::size_t>(b.row())]) += a.value() * b.value();
  gram /= static_cast<double>(x.cols());
  if (k <= kDirectEigenLimit) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().maxCoeff();
  }
  return estimate_lmax(gram, power_steps);
}

struct FailureRow {
  Index d = 0;
  Index failures = 0;
  Index trials = 0;
  double p_hat = 0.0;
  WilsonInterval ci;
};

/// Fraction of sampled datasets whose lambda_max(X X^T / D) exceeds epsilon, per D.
/// trials[i] datasets are drawn at d_grid[i].
inline std::vector<FailureRow> gd_failure_mc(const SparsityParams& params, const std::vector<Index>& d_grid,
                                             double epsilon, const std::vector<Index>& trials,
                                             const std::string& name = "gd-failure") {
  params.validate();
  if (!failure_law(params).applicable)
    throw std::domain_error("gd_failure_mc: requires alpha2 < -1 and alpha1 + alpha2 + 1 > 0");
  if (!(epsilon > 1.0)) throw std::invalid_argument("gd_failure_mc: epsilon must be > 1");
  if (d_grid.empty() || d_grid.size() != trials.size())
    throw std::invalid_argument("gd_failure_mc: need one trial count per D");
  const std::uint64_t exp_key = fnv1a64(name);
  std::vector<FailureRow> out;
  for (std::size_t i = 0; i < d_grid.size(); ++i) {
    if (d_grid[i] < 1 || trials[i] < 1) throw std::invalid_argument("gd_failure_mc: D and trials must be >= 1");
    FailureRow row;
    row.d = d_grid[i];
    row.trials = trials[i];
    for (Index t = 0; t < trials[i]; ++t) {
      const SparseMatrix x = sample_sparse_design(params, row.d, SeedContext{exp_key, static_cast<std::uint64_t>(t)});
      if (design_lmax(x) > epsilon) ++row.failures;
    }
    row.p_hat = static_cast<double>(row.failures) / static_cast<double>(row.trials);
    row.ci = wilson_interval(row.failures, row.trials);
    out.push_back(row);
  }
  return out;
}

inline std::vector<FailureRow> gd_failure_mc(const SparsityParams& params, const std::vector<Index>& d_grid,
                                             double epsilon, Index seeds_per_d) {
  return gd_failure_mc(params, d_grid, epsilon, std::vector<Index>(d_grid.size(), seeds_per_d));
}

/// -log(p2/p1)/log(D2/D1) for successive grid pairs; NaN where a rate is zero.
inline std::vector<double> local_exponents(const std::vector<FailureRow>& rows) {
  std::vector<double> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double p1 = rows[i - 1].p_hat, p2 = rows[i].p_hat;
    if (p1 > 0.0 && p2 > 0.0)
      out.push_back(-std::log(p2 / p1) / std::log(static_cast<double>(rows[i].d) / static_cast<double>(rows[i - 1].d)));
    else
      out.push_back(std::nan(""));
  }
  return out;
}

}  // namespace sparse_scaling
