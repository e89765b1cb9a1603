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

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>

#include "datagen.hpp"
#include "rng.hpp"

namespace sparse_scaling {

enum class Method { pinv, ridge, gd, nesterov };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::pinv: return "pinv";
    case Method::ridge: return "ridge";
    case Method::gd: return "gd";
    case Method::nesterov: return "nesterov";
  }
  return "?";
}

struct SolveResult {
  VectorXd theta;
  Method method = Method::pinv;
  Index iterations = 0;
  bool converged = false;
  bool diverged = false;
  double final_grad_norm = 0.0;
  double initial_grad_norm = 0.0;
  double step_size = 0.0;   // iterative methods
  double ridge_gamma = 0.0;  // ridge only
  Index rank = -1;           // pinv only
  double residual_norm = 0.0;  // ||y - Phi^T theta||
};

namespace detail {

inline void require_finite(const MatrixXd& phi, const VectorXd& y, const char* who) {
  if (phi.cols() != y.size()) throw std::invalid_argument(std::string(who) + ": labels length must equal feature columns");
  if (!phi.allFinite() || !y.allFinite()) throw std::invalid_argument(std::string(who) + ": non-finite input");
}

// Exposes the in-place application of Z^T, which Eigen keeps protected.
struct Cod : Eigen::CompleteOrthogonalDecomposition<MatrixXd> {
  using Eigen::CompleteOrthogonalDecomposition<MatrixXd>::applyZAdjointOnTheLeftInPlace;
};

}  // namespace detail

/// Minimum-norm least squares: theta = pinv(Phi^T) y.
/// Singular values count only when strictly above rtol * sigma_max.
inline SolveResult minnorm_pinv(const MatrixXd& phi, const VectorXd& y, double rtol = 1e-10) {
  detail::require_finite(phi, y, "minnorm_pinv");
  if (!(rtol > 0.0)) throw std::invalid_argument("minnorm_pinv: rtol must be > 0");
  const Index n = phi.rows(), d = phi.cols();
  SolveResult out;
  out.method = Method::pinv;
  out.converged = true;
  out.theta = VectorXd::Zero(n);
  if (n == 0 || d == 0) {
    out.residual_norm = y.norm();
    out.rank = 0;
    return out;
  }

  auto cut = [&](const VectorXd& s) {
    const double thresh = rtol * s[0];
    VectorXd inv = VectorXd::Zero(s.size());
    Index r = 0;
    for (Index i = 0; i < s.size(); ++i)
      if (s[i] > thresh) {
        inv[i] = 1.0 / s[i];
        ++r;
      }
    out.rank = r;
    return inv;
  };

  // A = Phi^T. A rank-revealing complete orthogonal decomposition A P = Q [T 0; 0 0] Z
  // first strips directions far below the cutoff, then the SVD of the small triangular
  // T applies the cutoff itself. Dropping exactly-degenerate directions before the SVD
  // also keeps Eigen 3.4's divide-and-conquer SVD away from inputs it mishandles.
  detail::Cod cod;
  cod.setThreshold(rtol * 1e-3);
  cod.compute(phi.transpose());
  const Index r = cod.rank();
  if (r == 0) {
    out.rank = 0;
    out.residual_norm = y.norm();
    return out;
  }
  const MatrixXd t = cod.matrixT().topLeftCorner(r, r).triangularView<Eigen::Upper>();
  const VectorXd qty = (cod.householderQ().transpose() * y).head(r);
  Eigen::BDCSVD<MatrixXd> svd(t, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VectorXd sinv = cut(svd.singularValues());
  VectorXd z = VectorXd::Zero(n);
  z.head(r) = svd.matrixV() * sinv.asDiagonal() * (svd.matrixU().transpose() * qty);
  if (r < n) cod.applyZAdjointOnTheLeftInPlace(z);  // Z is only formed when rank-deficient
  out.theta = cod.colsPermutation() * z;
  out.residual_norm = (y - phi.transpose() * out.theta).norm();
  return out;
}

enum class RidgeForm { automatic, feature_gram, sample_gram };

/// theta = (gamma I_N + Phi Phi^T)^{-1} Phi y = Phi (gamma I_D + Phi^T Phi)^{-1} y.
/// automatic picks whichever Gram is smaller.
inline SolveResult ridge_closed_form(const MatrixXd& phi, const VectorXd& y, double gamma,
                                     RidgeForm form = RidgeForm::automatic) {
  detail::require_finite(phi, y, "ridge_closed_form");
  if (!(gamma > 0.0)) throw std::invalid_argument("ridge_closed_form: gamma must be > 0");
  const Index n = phi.rows(), d = phi.cols();
  if (form == RidgeForm::automatic) form = n <= d ? RidgeForm::feature_gram : RidgeForm::sample_gram;
  SolveResult out;
  out.method = Method::ridge;
  out.ridge_gamma = gamma;
  out.converged = true;
  if (form == RidgeForm::feature_gram) {
    MatrixXd g = MatrixXd::Identity(n, n) * gamma;
    g.selfadjointView<Eigen::Lower>().rankUpdate(phi);
    Eigen::LLT<MatrixXd> llt(g.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success) throw std::runtime_error("ridge_closed_form: regularized Gram is numerically singular");
    out.theta = llt.solve(phi * y);
  } else {
    MatrixXd g = MatrixXd::Identity(d, d) * gamma;
    g.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
    Eigen::LLT<MatrixXd> llt(g.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success) throw std::runtime_error("ridge_closed_form: regularized Gram is numerically singular");
    out.theta = phi * llt.solve(y);
  }
  out.residual_norm = (y - phi.transpose() * out.theta).norm();
  return out;
}

inline constexpr std::uint64_t kPowerIterationSeed = 0x5EED;

/// Largest eigenvalue of a PSD matrix by power iteration from a seeded random unit vector.
/// Returns the Rayleigh quotient of the final iterate.
inline double estimate_lmax(const MatrixXd& gram, int steps = 50, std::uint64_t seed = kPowerIterationSeed) {
  if (gram.rows() != gram.cols()) throw std::invalid_argument("estimate_lmax: matrix must be square");
  if (steps < 1) throw std::invalid_argument("estimate_lmax: steps must be >= 1");
  const Index n = gram.rows();
  if (n == 0) return 0.0;
  Philox4x32 gen = SeedContext{0, seed}.stream(StreamPurpose::power_iteration, 0, static_cast<std::uint64_t>(n));
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(gen);
  v.normalize();
  VectorXd w(n);
  for (int s = 0; s < steps; ++s) {
    w.noalias() = gram * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
  }
  w.noalias() = gram * v;
  return v.dot(w);
}

namespace detail {

// Least squares in whichever coordinates are smaller.
//   primal (N <= D): iterate on theta with A = Phi Phi^T / D, b = Phi y / D.
//   dual   (N >  D): theta = Phi a, iterate on a with K = Phi^T Phi; the theta-gradient
//                    is Phi r / D with r = K a - y, and its norm is sqrt(r^T K r) / D.
// Both produce the same iterates in exact arithmetic as working with Phi directly.
struct Quadratic {
  bool primal = true;
  Index dim = 0;
  double d = 1.0;
  MatrixXd gram;  // A or K
  VectorXd rhs;   // b or y
  double yy = 0.0;

  Quadratic(const MatrixXd& phi, const VectorXd& y) {
    primal = phi.rows() <= phi.cols();
    d = static_cast<double>(phi.cols());
    yy = y.squaredNorm();
    if (primal) {
      dim = phi.rows();
      gram = MatrixXd::Zero(dim, dim);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(phi, 1.0 / d);
      gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
      rhs = phi * y / d;
    } else {
      dim = phi.cols();
      gram = MatrixXd::Zero(dim, dim);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
      gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
      rhs = y;
    }
  }

  // Largest eigenvalue of Phi Phi^T / D.
  double lmax(int steps, std::uint64_t seed) const {
    const double l = estimate_lmax(gram, steps, seed);
    return primal ? l : l / d;
  }

  VectorXd theta(const MatrixXd& phi, const VectorXd& z) const { return primal ? z : VectorXd(phi * z); }
};

}  // namespace detail

/// Called once per GD step with (step index, training loss after the step).
using LossObserver = std::function<void(Index, double)>;

/// Full-batch gradient descent from zero on (1/2D)||Phi^T theta - y||^2.
/// Stops on ||grad|| < tol ||grad_0||, on max_steps, or flags divergence when the loss
/// exceeds divergence_threshold times its initial value or stops being finite.
inline SolveResult gd_run(const MatrixXd& phi, const VectorXd& y, double eta, Index max_steps,
                          double divergence_threshold = 1e12, double tol = 1e-9,
                          const LossObserver& observer = nullptr) {
  detail::require_finite(phi, y, "gd_run");
  if (!(eta > 0.0)) throw std::invalid_argument("gd_run: eta must be > 0");
  const detail::Quadratic q(phi, y);
  SolveResult out;
  out.method = Method::gd;
  out.step_size = eta;
  const double loss0 = q.yy / (2.0 * q.d);
  VectorXd z = VectorXd::Zero(q.dim);
  // g: primal gradient A theta - b; dual residual K a - y.
  VectorXd g = -q.rhs;
  VectorXd kg(q.dim);
  auto grad_norm = [&](const VectorXd& kg_) {
    return q.primal ? g.norm() : std::sqrt(std::max(0.0, g.dot(kg_))) / q.d;
  };
  auto loss_of = [&]() {
    return q.primal ? 0.5 * z.dot(g - q.rhs) + loss0 : g.squaredNorm() / (2.0 * q.d);
  };
  kg.noalias() = q.gram * g;
  out.initial_grad_norm = grad_norm(kg);
  out.final_grad_norm = out.initial_grad_norm;
  if (out.initial_grad_norm == 0.0) {
    out.converged = true;
    out.theta = VectorXd::Zero(phi.rows());
    return out;
  }
  const double scale = q.primal ? eta : eta / q.d;
  constexpr Index kResync = 64;
  Index step = 0;
  while (step < max_steps) {
    z.noalias() -= scale * g;
    ++step;
    if (step % kResync == 0) {
      g.noalias() = q.gram * z;
      g -= q.rhs;
    } else {
      g.noalias() -= scale * kg;
    }
    kg.noalias() = q.gram * g;
    const double loss = loss_of();
    if (observer) observer(step, loss);
    if (!std::isfinite(loss) || !z.allFinite() || loss > divergence_threshold * loss0) {
      out.diverged = true;
      break;
    }
    out.final_grad_norm = grad_norm(kg);
    if (out.final_grad_norm < tol * out.initial_grad_norm) {
      out.converged = true;
      break;
    }
  }
  out.iterations = step;
  out.theta = q.theta(phi, z);
  out.residual_norm = (y - phi.transpose() * out.theta).norm();
  return out;
}

struct NesterovOptions {
  double tol = 1e-9;
  Index max_iter = 500000;
  int power_steps = 50;
  std::uint64_t power_seed = kPowerIterationSeed;
};

/// Accelerated gradient from zero with step 1/lambda_max(Phi Phi^T / D) and gradient
/// restart: momentum is dropped whenever grad(y_k) . (x_{k+1} - x_k) > 0.
inline SolveResult nesterov_run(const MatrixXd& phi, const VectorXd& y, const NesterovOptions& opt = {}) {
  detail::require_finite(phi, y, "nesterov_run");
  if (!(opt.tol > 0.0)) throw std::invalid_argument("nesterov_run: tol must be > 0");
  if (opt.max_iter < 0) throw std::invalid_argument("nesterov_run: max_iter must be >= 0");
  const detail::Quadratic q(phi, y);
  SolveResult out;
  out.method = Method::nesterov;

  // primal: gx = A x - b is the gradient. dual: gx = K x - y is the residual.
  VectorXd x = VectorXd::Zero(q.dim), xn(q.dim), yv(q.dim);
  VectorXd gx = -q.rhs, gxn(q.dim), gy(q.dim), kr(q.dim);
  auto grad_norm = [&](const VectorXd& r) {
    if (q.primal) return r.norm();
    kr.noalias() = q.gram * r;
    return std::sqrt(std::max(0.0, r.dot(kr))) / q.d;
  };
  out.initial_grad_norm = grad_norm(gx);
  out.final_grad_norm = out.initial_grad_norm;
  if (out.initial_grad_norm == 0.0) {
    out.converged = true;
    out.theta = VectorXd::Zero(phi.rows());
    return out;
  }
  const double lmax = q.lmax(opt.power_steps, opt.power_seed);
  out.step_size = 1.0 / lmax;
  const double scale = q.primal ? out.step_size : out.step_size / q.d;
  const double target = opt.tol * out.initial_grad_norm;

  yv = x;
  gy = gx;
  double t = 1.0;
  Index k = 0;
  while (k < opt.max_iter) {
    xn = yv - scale * gy;
    gxn.noalias() = q.gram * xn;
    gxn -= q.rhs;
    ++k;
    // grad(y)^T (x_{k+1} - x_k); in the dual, K (a_{k+1} - a_k) = r_{k+1} - r_k.
    const double dir = q.primal ? gy.dot(xn - x) : gy.dot(gxn - gx) / q.d;
    const double gn = grad_norm(gxn);
    if (!std::isfinite(gn)) {
      out.diverged = true;
      x = xn;
      break;
    }
    out.final_grad_norm = gn;
    if (gn < target) {
      out.converged = true;
      x = xn;
      break;
    }
    if (dir > 0.0) {
      t = 1.0;
      yv = xn;
      gy = gxn;
    } else {
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double beta = (t - 1.0) / tn;
      yv = xn + beta * (xn - x);
      gy = gxn + beta * (gxn - gx);
      t = tn;
    }
    x.swap(xn);
    gx.swap(gxn);
  }
  out.iterations = k;
  out.theta = q.theta(phi, x);
  out.residual_norm = (y - phi.transpose() * out.theta).norm();
  return out;
}

inline SolveResult nesterov_run(const MatrixXd& phi, const VectorXd& y, double tol, Index max_iter = 500000) {
  NesterovOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return nesterov_run(phi, y, opt);
}

/// lambda_max(Phi Phi^T / D) by power iteration on the smaller Gram.
inline double estimate_feature_lmax(const MatrixXd& phi, int steps = 50, std::uint64_t seed = kPowerIterationSeed) {
  if (phi.cols() == 0) return 0.0;
  return detail::Quadratic(phi, VectorXd::Zero(phi.cols())).lmax(steps, seed);
}

}  // namespace sparse_scaling
