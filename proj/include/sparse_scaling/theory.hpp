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
#include <cmath>
#include <stdexcept>
#include <string>

#include "datagen.hpp"

namespace sparse_scaling {

enum class Regime { weak_sparsity, sparse };

inline const char* to_string(Regime r) { return r == Regime::sparse ? "sparse" : "weak-sparsity"; }

struct ExponentSet {
  double alpha_n = 0.0;  // parameter-limited
  double alpha_d = 0.0;  // data-limited
  double alpha_c = 0.0;  // compute-optimal
  Regime regime = Regime::sparse;
};

namespace detail {

inline void require_sparse(double alpha1, const char* who) {
  if (!(alpha1 > 0.0)) throw std::domain_error(std::string(who) + ": requires alpha1 > 0");
}

inline void require_finite_variance(const SparsityParams& p, const char* who) {
  if (!(p.alpha1 + p.alpha2 + 1.0 > 0.0))
    throw std::domain_error(std::string(who) + ": requires alpha1 + alpha2 + 1 > 0");
  if (p.alpha1 < -1.0) throw std::domain_error(std::string(who) + ": requires alpha1 >= -1");
}

}  // namespace detail

inline ExponentSet predicted_exponents(const SparsityParams& p) {
  detail::require_finite_variance(p, "predicted_exponents");
  ExponentSet e;
  e.alpha_n = p.alpha1 + p.alpha2 + 1.0;
  if (p.alpha1 > 0.0) {
    e.regime = Regime::sparse;
    e.alpha_d = e.alpha_n / (p.alpha1 + 1.0);
  } else {
    e.regime = Regime::weak_sparsity;
    e.alpha_d = e.alpha_n;
  }
  e.alpha_c = e.alpha_n * e.alpha_d / (e.alpha_n + 2.0 * e.alpha_d);
  return e;
}

/// Expected number of coordinates seen at least once in d samples:
/// Gamma(1 - 1/(alpha1+1)) d^{1/(alpha1+1)}.
inline double k_of_d(double alpha1, double d) {
  detail::require_sparse(alpha1, "k_of_d");
  if (!(d > 0.0)) throw std::domain_error("k_of_d: d must be > 0");
  const double inv = 1.0 / (alpha1 + 1.0);
  return std::tgamma(1.0 - inv) * std::pow(d, inv);
}

/// Exact expectation of the distinct-activation count for a finite model:
/// sum_j 1 - (1 - p_j)^d.
inline double expected_distinct_active(const SparsityParams& p, double d) {
  double s = 0.0;
  for (Index j = p.m; j >= 1; --j) {
    const double pj = p.activation_probability(j);
    s += pj >= 1.0 ? 1.0 : -std::expm1(d * std::log1p(-pj));
  }
  return s;
}

struct TailLoss {
  double truncated = 0.0;  // sum over k < j <= m, the simulated model
  double infinite = 0.0;   // sum over j > k without truncation
};

namespace detail {

// sum_{j > n} j^{-s} for n >= 20 by Euler-Maclaurin.
inline double zeta_tail(double s, double n) {
  const double f = std::pow(n, -s);
  return n * f / (s - 1.0) - 0.5 * f + s * f / (12.0 * n) - s * (s + 1.0) * (s + 2.0) * f / (720.0 * n * n * n);
}

}  // namespace detail

/// Unexplained variance beyond the first k coordinates, sum_{j>k} j^{-(alpha1+alpha2+2)}.
inline TailLoss tail_loss(const SparsityParams& p, double k) {
  detail::require_finite_variance(p, "tail_loss");
  if (!(k >= 0.0)) throw std::domain_error("tail_loss: k must be >= 0");
  const double s = p.variance_exponent();
  const Index start = static_cast<Index>(std::floor(k)) + 1;
  TailLoss out;
  for (Index j = p.m; j >= start; --j) out.truncated += std::pow(static_cast<double>(j), -s);
  const Index exact_to = std::max<Index>({p.m, start - 1, 64});
  double head = 0.0;
  for (Index j = exact_to; j >= std::max<Index>(start, p.m + 1); --j) head += std::pow(static_cast<double>(j), -s);
  out.infinite = out.truncated + head + detail::zeta_tail(s, static_cast<double>(exact_to));
  return out;
}

/// Overparameterized Bayes loss, (1/(alpha1+1)) Gamma(beta) d^{-beta} with beta = alpha_D.
inline double closed_form_over_loss(const SparsityParams& p, double d) {
  detail::require_sparse(p.alpha1, "closed_form_over_loss");
  detail::require_finite_variance(p, "closed_form_over_loss");
  const double beta = (p.alpha1 + p.alpha2 + 1.0) / (p.alpha1 + 1.0);
  return std::tgamma(beta) * std::pow(d, -beta) / (p.alpha1 + 1.0);
}

/// Location of the double-descent peak in the collapse variable: 1/Gamma(alpha1/(1+alpha1)).
inline double xi_crit(double alpha1) {
  detail::require_sparse(alpha1, "xi_crit");
  return 1.0 / std::tgamma(alpha1 / (1.0 + alpha1));
}

/// Collapse variable d^{alpha_D/alpha_N}/n: d^{1/(alpha1+1)}/n when sparse, d/n otherwise.
inline double collapse_variable(const SparsityParams& p, double n, double d) {
  const double power = p.alpha1 > 0.0 ? 1.0 / (p.alpha1 + 1.0) : 1.0;
  return std::pow(d, power) / n;
}

/// Compute proxy C = N D min(N, D).
inline double compute_proxy(double n, double d) { return n * d * std::min(n, d); }

struct ComputeOptimal {
  double n_star = 0.0;
  double d_star = 0.0;
  double loss_star = 0.0;
  double n_exponent = 0.0;  // N* = C^{n_exponent}
  double d_exponent = 0.0;
  double alpha_c = 0.0;
};

/// Balances N^{-alpha_N} = D^{-alpha_D} subject to N^2 D = C.
inline ComputeOptimal compute_optimal(const SparsityParams& p, double c) {
  detail::require_sparse(p.alpha1, "compute_optimal");
  if (!(c > 0.0)) throw std::domain_error("compute_optimal: budget must be > 0");
  const ExponentSet e = predicted_exponents(p);
  ComputeOptimal out;
  out.n_exponent = 1.0 / (p.alpha1 + 3.0);
  out.d_exponent = (p.alpha1 + 1.0) / (p.alpha1 + 3.0);
  out.alpha_c = e.alpha_c;
  out.n_star = std::pow(c, out.n_exponent);
  out.d_star = c / (out.n_star * out.n_star);
  out.loss_star = std::pow(out.n_star, -e.alpha_n) + std::pow(out.d_star, -e.alpha_d);
  return out;
}

struct FailureLaw {
  bool applicable = false;
  double nu = 0.0;
  double amplitude_exponent = 0.0;  // -alpha2 - 1

  /// Index beyond which a single activation pushes eta * lambda_max past 2: (2d/eta)^{1/(-alpha2-1)}.
  double j_star(double d, double eta) const {
    if (!applicable) throw std::logic_error("FailureLaw::j_star: law not applicable");
    return std::pow(2.0 * d / eta, 1.0 / amplitude_exponent);
  }
};

inline FailureLaw failure_law(const SparsityParams& p, double eta = 1.0) {
  if (!(eta > 0.0 && eta < 2.0)) throw std::domain_error("failure_law: eta must lie in (0, 2)");
  FailureLaw f;
  f.amplitude_exponent = -p.alpha2 - 1.0;
  f.applicable = p.alpha2 < -1.0 && p.alpha1 + p.alpha2 + 1.0 > 0.0;
  if (f.applicable) f.nu = (p.alpha1 + p.alpha2 + 1.0) / f.amplitude_exponent;
  return f;
}

enum class ComputeRegime { heavily_overparameterized, intermediate, underparameterized };

inline const char* to_string(ComputeRegime r) {
  switch (r) {
    case ComputeRegime::heavily_overparameterized: return "heavily-overparameterized";
    case ComputeRegime::intermediate: return "intermediate";
    case ComputeRegime::underparameterized: return "underparameterized";
  }
  return "?";
}

/// Solver cost normalized by N D. Exponents only; constants are not predicted.
struct CostTable {
  double gd = 0.0;
  double accelerated = 0.0;
  double direct = 0.0;
};

struct ConditionModel {
  double kappa = 0.0;
  double k_of_d = 0.0;
  ComputeRegime regime = ComputeRegime::underparameterized;
  CostTable cost;
  double crossover_n = 0.0;  // N_c(D) ~ D^{(alpha1+alpha2+2)/(2(alpha1+1))}; informational
};

inline ConditionModel condition_number_model(const SparsityParams& p, double n, double d) {
  detail::require_sparse(p.alpha1, "condition_number_model");
  const double a = p.alpha1 + p.alpha2 + 2.0;
  const double b = p.alpha1 + 1.0;
  ConditionModel out;
  out.k_of_d = k_of_d(p.alpha1, d);
  out.kappa = std::pow(std::min(n, out.k_of_d), a);
  out.crossover_n = std::pow(d, a / (2.0 * b));
  if (out.k_of_d > n) {
    out.regime = ComputeRegime::underparameterized;
    out.cost = {std::pow(n, a), std::pow(n, a / 2.0), n};
  } else if (n > d) {
    out.regime = ComputeRegime::heavily_overparameterized;
    out.cost = {std::pow(d, a / b), std::pow(d, a / (2.0 * b)), d};
  } else {
    out.regime = ComputeRegime::intermediate;
    out.cost = {std::pow(d, a / b), std::pow(d, a / (2.0 * b)), n};
  }
  return out;
}

}  // namespace sparse_scaling
