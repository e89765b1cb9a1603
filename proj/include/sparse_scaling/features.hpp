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

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>

#include "datagen.hpp"
#include "rng.hpp"

namespace sparse_scaling {

enum class Activation { linear, rectifier };

inline const char* to_string(Activation a) { return a == Activation::linear ? "linear" : "relu"; }

/// Frozen random embedding u (N x M, entries N(0, 1/N)) and the nonlinearity applied after it.
class FeatureMap {
 public:
  FeatureMap(MatrixXd u, Activation activation, std::uint64_t seed)
      : u_(std::make_shared<const MatrixXd>(std::move(u))), activation_(activation), seed_(seed) {}

  const MatrixXd& u() const noexcept { return *u_; }
  Activation activation() const noexcept { return activation_; }
  Index n() const noexcept { return u_->rows(); }
  Index m() const noexcept { return u_->cols(); }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::shared_ptr<const MatrixXd> u_;
  Activation activation_;
  std::uint64_t seed_;
};

inline FeatureMap sample_embedding(Index n, Index m, const SeedContext& ctx, Activation activation) {
  if (n < 1 || m < 1) throw std::invalid_argument("sample_embedding: n and m must be >= 1");
  Philox4x32 gen = ctx.stream(StreamPurpose::embedding, 0, static_cast<std::uint64_t>(n));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(n)));
  MatrixXd u(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) u(i, j) = normal(gen);
  return FeatureMap(std::move(u), activation, ctx.seed);
}

inline FeatureMap sample_embedding(Index n, Index m, std::uint64_t seed, Activation activation) {
  return sample_embedding(n, m, SeedContext{0, seed}, activation);
}

inline void apply_activation(Activation a, MatrixXd& pre) {
  if (a == Activation::rectifier) pre = pre.cwiseMax(0.0);
}

/// Phi = act(u X) for a sparse design: each column is a combination of the columns
/// of u picked out by the nonzeros of that sample.
inline MatrixXd compute_features(const FeatureMap& map, const SparseMatrix& x) {
  if (map.m() != x.rows()) throw std::invalid_argument("compute_features: embedding width does not match data dimension");
  const MatrixXd& u = map.u();
  MatrixXd phi = MatrixXd::Zero(map.n(), x.cols());
  for (Index c = 0; c < x.cols(); ++c)
    for (SparseMatrix::InnerIterator it(x, c); it; ++it) phi.col(c).noalias() += it.value() * u.col(it.row());
  apply_activation(map.activation(), phi);
  return phi;
}

inline MatrixXd compute_features(const FeatureMap& map, const MatrixXd& x) {
  if (map.m() != x.rows()) throw std::invalid_argument("compute_features: embedding width does not match data dimension");
  MatrixXd phi = map.u() * x;
  apply_activation(map.activation(), phi);
  return phi;
}

inline MatrixXd compute_features(const FeatureMap& map, const Dataset& data) {
  return data.kind == DataKind::sparse ? compute_features(map, data.x_sparse) : compute_features(map, data.x_dense);
}

/// Plain triple loop over a densified copy; only for checking the fast paths.
inline MatrixXd compute_features_reference(const FeatureMap& map, const MatrixXd& x) {
  if (map.m() != x.rows()) throw std::invalid_argument("compute_features_reference: dimension mismatch");
  MatrixXd phi(map.n(), x.cols());
  for (Index i = 0; i < map.n(); ++i)
    for (Index c = 0; c < x.cols(); ++c) {
      double s = 0.0;
      for (Index j = 0; j < map.m(); ++j) s += map.u()(i, j) * x(j, c);
      phi(i, c) = map.activation() == Activation::rectifier ? std::max(0.0, s) : s;
    }
  return phi;
}

/// w_eff = u^T theta. Only the linear map has input-space weights.
inline VectorXd effective_weights(const FeatureMap& map, const VectorXd& theta) {
  if (map.activation() != Activation::linear)
    throw std::logic_error("effective_weights: undefined for the rectifier map");
  if (theta.size() != map.n()) throw std::invalid_argument("effective_weights: theta has wrong length");
  return map.u().transpose() * theta;
}

/// Largest deviation from 1 among the eigenvalues of u^T u restricted to span(X):
/// with Q an orthonormal basis of that span, the spectrum of (uQ)^T (uQ).
inline double isometry_defect(const FeatureMap& map, const MatrixXd& x) {
  if (map.m() != x.rows()) throw std::invalid_argument("isometry_defect: dimension mismatch");
  Eigen::HouseholderQR<MatrixXd> qr(x);
  const MatrixXd q = qr.householderQ() * MatrixXd::Identity(x.rows(), x.cols());
  const MatrixXd uq = map.u() * q;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(uq.transpose() * uq, Eigen::EigenvaluesOnly);
  const VectorXd& ev = eig.eigenvalues();
  return std::max(std::abs(ev.maxCoeff() - 1.0), std::abs(1.0 - ev.minCoeff()));
}

}  // namespace sparse_scaling
