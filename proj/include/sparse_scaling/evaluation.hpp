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
#include <memory>
#include <stdexcept>
#include <vector>

#include "datagen.hpp"
#include "features.hpp"

namespace sparse_scaling {

/// (w - w_eff)^T Sigma (w - w_eff) with the diagonal covariance of the data model.
inline double population_loss_exact(const SparsityParams& params, const VectorXd& w, const VectorXd& w_eff) {
  if (w.size() != params.m || w_eff.size() != params.m)
    throw std::invalid_argument("population_loss_exact: vectors must have length m");
  const double s = params.variance_exponent();
  double loss = 0.0;
  for (Index j = params.m; j >= 1; --j) {
    const double diff = w[j - 1] - w_eff[j - 1];
    loss += diff * diff * std::pow(static_cast<double>(j), -s);
  }
  return loss;
}

struct McLoss {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Several readouts sharing one feature map; thetas holds one readout per column.
struct McRequest {
  const FeatureMap* map = nullptr;
  MatrixXd thetas;
};

inline constexpr Index kTestBlock = 512;

/// Mean squared error (w^T x - theta^T phi(x))^2 over n_test fresh samples, for every
/// readout in every request. All requests see the same test samples.
inline std::vector<std::vector<McLoss>> test_loss_mc_multi(const SparsityParams& params, DataKind kind,
                                                          const VectorXd& w, Index n_test, const SeedContext& ctx,
                                                          const std::vector<McRequest>& requests) {
  if (n_test < 1) throw std::invalid_argument("test_loss_mc: n_test must be >= 1");
  if (w.size() != params.m) throw std::invalid_argument("test_loss_mc: teacher length must equal m");
  for (const McRequest& r : requests) {
    if (r.map == nullptr || r.map->m() != params.m || r.thetas.rows() != r.map->n())
      throw std::invalid_argument("test_loss_mc: request does not match the data model");
  }
  std::vector<std::vector<double>> sum(requests.size()), sumsq(requests.size());
  for (std::size_t r = 0; r < requests.size(); ++r) {
    sum[r].assign(static_cast<std::size_t>(requests[r].thetas.cols()), 0.0);
    sumsq[r].assign(static_cast<std::size_t>(requests[r].thetas.cols()), 0.0);
  }

  SparseMatrix xs;
  std::unique_ptr<DenseColumnSource> source;
  if (kind == DataKind::sparse)
    xs = sample_sparse_design(params, n_test, ctx, StreamPurpose::test_set);
  else
    source = std::make_unique<DenseColumnSource>(dense_source(params, ctx, StreamPurpose::test_set));

  MatrixXd xblock;
  for (Index first = 0; first < n_test; first += kTestBlock) {
    const Index cols = std::min(kTestBlock, n_test - first);
    VectorXd truth;
    SparseMatrix sblock;
    if (kind == DataKind::sparse) {
      sblock = xs.middleCols(first, cols);
      truth = compute_labels(sblock, w);
    } else {
      xblock.resize(params.m, cols);
      source->fill(xblock, first);
      truth = compute_labels(xblock, w);
    }
    for (std::size_t r = 0; r < requests.size(); ++r) {
      const MatrixXd phi = kind == DataKind::sparse ? compute_features(*requests[r].map, sblock)
                                                    : compute_features(*requests[r].map, xblock);
      const MatrixXd pred = requests[r].thetas.transpose() * phi;  // k x cols
      for (Index k = 0; k < pred.rows(); ++k) {
        double s = 0.0, s2 = 0.0;
        for (Index c = 0; c < cols; ++c) {
          const double e = truth[c] - pred(k, c);
          const double e2 = e * e;
          s += e2;
          s2 += e2 * e2;
        }
        sum[r][static_cast<std::size_t>(k)] += s;
        sumsq[r][static_cast<std::size_t>(k)] += s2;
      }
    }
  }

  const double nt = static_cast<double>(n_test);
  std::vector<std::vector<McLoss>> out(requests.size());
  for (std::size_t r = 0; r < requests.size(); ++r) {
    for (std::size_t k = 0; k < sum[r].size(); ++k) {
      McLoss l;
      l.mean = sum[r][k] / nt;
      const double var = n_test > 1 ? std::max(0.0, (sumsq[r][k] - nt * l.mean * l.mean) / (nt - 1.0)) : 0.0;
      l.std_error = std::sqrt(var / nt);
      out[r].push_back(l);
    }
  }
  return out;
}

inline McLoss test_loss_mc(const FeatureMap& map, const VectorXd& theta, const SparsityParams& params, DataKind kind,
                           const VectorXd& w, Index n_test, const SeedContext& ctx) {
  McRequest req{&map, theta};
  return test_loss_mc_multi(params, kind, w, n_test, ctx, {req})[0][0];
}

}  // namespace sparse_scaling
