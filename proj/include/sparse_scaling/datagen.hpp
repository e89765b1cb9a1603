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
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "rng.hpp"

namespace sparse_scaling {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, std::int64_t>;

/// Generative model: coordinate j (1-based) fires with probability
/// j^{-alpha1-1} and then takes the value +-j^{-(alpha2+1)/2}.
struct SparsityParams {
  double alpha1 = 1.0;
  double alpha2 = 0.3;
  Index m = 10000;

  void validate() const {
    if (!std::isfinite(alpha1) || !std::isfinite(alpha2))
      throw std::invalid_argument("SparsityParams: exponents must be finite");
    if (alpha1 < -1.0) throw std::invalid_argument("SparsityParams: alpha1 must be >= -1");
    if (!(alpha1 + alpha2 + 1.0 > 0.0))
      throw std::invalid_argument("SparsityParams: alpha1 + alpha2 + 1 must be > 0");
    if (m < 1) throw std::invalid_argument("SparsityParams: m must be >= 1");
  }

  /// alpha1 + alpha2 + 2, the decay of the per-coordinate variance.
  double variance_exponent() const noexcept { return alpha1 + alpha2 + 2.0; }

  double activation_probability(Index j) const {
    check_index(j);
    return alpha1 == -1.0 ? 1.0 : std::pow(static_cast<double>(j), -alpha1 - 1.0);
  }

  double amplitude(Index j) const {
    check_index(j);
    return std::pow(static_cast<double>(j), -(alpha2 + 1.0) / 2.0);
  }

  double variance(Index j) const {
    check_index(j);
    return std::pow(static_cast<double>(j), -variance_exponent());
  }

  /// Variances of coordinates 1..m as a dense vector (index 0 is coordinate 1).
  VectorXd variances() const {
    VectorXd v(m);
    for (Index j = 1; j <= m; ++j) v[j - 1] = std::pow(static_cast<double>(j), -variance_exponent());
    return v;
  }

  /// Expected number of nonzeros in one sample.
  double expected_nnz_per_sample() const {
    double s = 0.0;
    for (Index j = m; j >= 1; --j) s += activation_probability(j);
    return s;
  }

 private:
  static void check_index(Index j) {
    if (j < 1) throw std::domain_error("coordinate index must be >= 1");
  }
};

/// Parameters that reproduce the dense Gaussian baseline's variance profile j^{-(alpha+1)}.
inline SparsityParams dense_baseline_params(double alpha, Index m) {
  return SparsityParams{-1.0, alpha, m};
}

/// Var(x_j) = j^{-(alpha1+alpha2+2)}.
inline double coordinate_variance(const SparsityParams& params, Index j) { return params.variance(j); }

enum class DataKind { sparse, dense_baseline };

inline const char* to_string(DataKind k) { return k == DataKind::sparse ? "sparse" : "dense"; }

/// Training set. Columns are samples. Exactly one of x_sparse / x_dense is populated,
/// depending on kind.
struct Dataset {
  DataKind kind = DataKind::sparse;
  SparsityParams params;
  std::uint64_t seed = 0;
  SparseMatrix x_sparse;
  MatrixXd x_dense;
  VectorXd teacher_w;
  VectorXd labels_y;

  Index m() const noexcept { return params.m; }
  Index d() const noexcept { return kind == DataKind::sparse ? x_sparse.cols() : x_dense.cols(); }
};

/// One standard-normal vector of length m, scaled by std_dev.
inline VectorXd sample_teacher(Index m, const SeedContext& ctx, double std_dev = 1.0) {
  if (m < 1) throw std::invalid_argument("sample_teacher: m must be >= 1");
  Philox4x32 gen = ctx.stream(StreamPurpose::teacher);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd w(m);
  for (Index j = 0; j < m; ++j) w[j] = std_dev * normal(gen);
  return w;
}

inline VectorXd sample_teacher(Index m, std::uint64_t seed) { return sample_teacher(m, SeedContext{0, seed}); }

namespace detail {

struct Entry {
  std::int64_t col;
  std::int64_t row;
  double value;
};

// Counting sort by column; entries arrive row-major, so rows stay sorted inside each column.
inline SparseMatrix assemble_columns(Index m, Index d, const std::vector<Entry>& entries) {
  SparseMatrix x(m, d);
  x.resizeNonZeros(static_cast<Index>(entries.size()));
  std::int64_t* outer = x.outerIndexPtr();
  std::fill(outer, outer + d + 1, std::int64_t{0});
  for (const Entry& e : entries) ++outer[e.col + 1];
  for (Index c = 0; c < d; ++c) outer[c + 1] += outer[c];
  std::vector<std::int64_t> cursor(outer, outer + d);
  for (const Entry& e : entries) {
    const std::int64_t slot = cursor[e.col]++;
    x.innerIndexPtr()[slot] = e.row;
    x.valuePtr()[slot] = e.value;
  }
  return x;
}

// Number of activations of one coordinate given the uniform u and P(count = 0) = q0.
// Plain inversion; only called when d*p is small so the loop is short.
inline Index invert_binomial(double u, Index d, double p, double q0) {
  double prob = q0, cdf = q0;
  Index k = 0;
  const double odds = p / (1.0 - p);
  while (u >= cdf && k < d) {
    prob *= static_cast<double>(d - k) / static_cast<double>(k + 1) * odds;
    ++k;
    cdf += prob;
    if (prob == 0.0 && cdf < u) break;  // round-off tail
  }
  return std::max<Index>(k, 1);
}

// Distinct sample indices in [0, d), `count` of them, uniformly at random.
inline void choose_columns(Philox4x32& gen, Index d, Index count, std::vector<std::int64_t>& out) {
  out.clear();
  if (count >= d) {
    for (Index c = 0; c < d; ++c) out.push_back(c);
    return;
  }
  if (count * 16 >= d) {
    // Selection sampling, one pass over all columns.
    Index needed = count;
    for (Index c = 0; c < d && needed > 0; ++c) {
      if (static_cast<double>(d - c) * gen.uniform() < static_cast<double>(needed)) {
        out.push_back(c);
        --needed;
      }
    }
    return;
  }
  // Floyd's algorithm.
  std::unordered_set<std::int64_t> taken;
  taken.reserve(static_cast<std::size_t>(count) * 2);
  for (Index top = d - count; top < d; ++top) {
    std::uniform_int_distribution<std::int64_t> pick(0, top);
    const std::int64_t t = pick(gen);
    const std::int64_t c = taken.insert(t).second ? t : top;
    if (c == top) taken.insert(top);
    out.push_back(c);
  }
}

}  // namespace detail

/// Activation counts below this expected value switch to geometric skipping.
inline constexpr double kSkipThreshold = 0.1;

/// Samples the M x D design only. Coordinate-major: the number of samples in which
/// coordinate j fires is binomial, then the firing samples and signs are placed.
/// Cost is O(active coordinates + nnz), independent of M once coordinates become rare.
inline SparseMatrix sample_sparse_design(const SparsityParams& params, Index d, const SeedContext& ctx,
                                         StreamPurpose purpose = StreamPurpose::data) {
  params.validate();
  if (d < 1) throw std::invalid_argument("sample_sparse_design: d must be >= 1");
  Philox4x32 gen = ctx.stream(purpose, 0, static_cast<std::uint64_t>(d));
  const double dd = static_cast<double>(d);
  const double amp_exp = -(params.alpha2 + 1.0) / 2.0;

  std::vector<detail::Entry> entries;
  std::vector<std::int64_t> cols;

  auto place = [&](Index j, Index count) {
    detail::choose_columns(gen, d, count, cols);
    const double amp = std::pow(static_cast<double>(j), amp_exp);
    for (const std::int64_t c : cols) {
      const double sign = (gen() >> 63) ? -1.0 : 1.0;
      entries.push_back({c, j - 1, sign * amp});
    }
  };

  Index j = 1;
  for (; j <= params.m; ++j) {
    const double p = params.activation_probability(j);
    if (p >= 1.0) {
      place(j, d);
      continue;
    }
    const double lam = dd * p;
    if (lam < kSkipThreshold) break;
    Index count;
    if (lam < 16.0) {
      const double q0 = std::exp(dd * std::log1p(-p));
      const double u = gen.uniform();
      if (u < q0) continue;
      count = detail::invert_binomial(u, d, p, q0);
    } else {
      std::binomial_distribution<std::int64_t> binom(d, p);
      count = binom(gen);
      if (count == 0) continue;
    }
    place(j, count);
  }

  // Rare tail: P(coordinate fires at least once) = 1 - (1-p_j)^d is decreasing in j.
  // Candidates are proposed at the rate of the first index of a doubling block and
  // thinned to the exact rate, so each coordinate is still an independent draw.
  while (j <= params.m) {
    const Index block_end = std::min<Index>(params.m, 2 * j - 1);
    auto any_rate = [&](Index idx) {
      return -std::expm1(dd * std::log1p(-params.activation_probability(idx)));
    };
    const double bound = any_rate(j);
    if (bound <= 0.0) break;
    const double log_miss = std::log1p(-bound);
    Index cand = j;
    while (true) {
      const double skip = std::floor(std::log(gen.uniform_open()) / log_miss);
      if (skip > static_cast<double>(block_end - cand)) break;
      cand += static_cast<Index>(skip);
      const double rate = any_rate(cand);
      if (gen.uniform() * bound < rate) {
        // Count conditioned on being at least one.
        const double p = params.activation_probability(cand);
        const double q0 = 1.0 - rate;
        const double u = q0 + gen.uniform() * rate;
        place(cand, detail::invert_binomial(u, d, p, q0));
      }
      ++cand;
      if (cand > block_end) break;
    }
    j = block_end + 1;
  }

  return detail::assemble_columns(params.m, d, entries);
}

/// O(M*D) reference sampler: one Bernoulli draw per entry. Slow; kept to check the fast path.
inline SparseMatrix sample_sparse_design_naive(const SparsityParams& params, Index d, const SeedContext& ctx) {
  params.validate();
  if (d < 1) throw std::invalid_argument("sample_sparse_design_naive: d must be >= 1");
  std::vector<detail::Entry> entries;
  for (Index j = 1; j <= params.m; ++j) {
    Philox4x32 gen = ctx.stream(StreamPurpose::naive_data, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(d));
    const double p = params.activation_probability(j);
    const double amp = params.amplitude(j);
    for (Index c = 0; c < d; ++c) {
      const std::uint64_t r = gen();
      const double u = static_cast<double>(r >> 11) * 0x1.0p-53;
      if (u < p) entries.push_back({c, j - 1, (gen() >> 63) ? -amp : amp});
    }
  }
  return detail::assemble_columns(params.m, d, entries);
}

/// y_d = w . x_d.
inline VectorXd compute_labels(const SparseMatrix& x, const VectorXd& w) {
  if (x.rows() != w.size()) throw std::invalid_argument("compute_labels: dimension mismatch");
  VectorXd y(x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(x, c); it; ++it) s += w[it.row()] * it.value();
    y[c] = s;
  }
  return y;
}

inline VectorXd compute_labels(const MatrixXd& x, const VectorXd& w) {
  if (x.rows() != w.size()) throw std::invalid_argument("compute_labels: dimension mismatch");
  return x.transpose() * w;
}

struct SampleOptions {
  double teacher_std = 1.0;
  bool naive = false;
};

inline Dataset sample_sparse_dataset(const SparsityParams& params, Index d, const SeedContext& ctx,
                                     const SampleOptions& opts = {}) {
  Dataset ds;
  ds.kind = DataKind::sparse;
  ds.params = params;
  ds.seed = ctx.seed;
  ds.x_sparse = opts.naive ? sample_sparse_design_naive(params, d, ctx) : sample_sparse_design(params, d, ctx);
  ds.teacher_w = sample_teacher(params.m, ctx, opts.teacher_std);
  ds.labels_y = compute_labels(ds.x_sparse, ds.teacher_w);
  return ds;
}

inline Dataset sample_sparse_dataset(const SparsityParams& params, Index d, std::uint64_t seed) {
  return sample_sparse_dataset(params, d, SeedContext{0, seed});
}

/// Gaussian columns with Var(x_j) = j^{-(alpha+1)}. Column c comes from its own
/// substream, so a dataset of size D is the first D columns of any larger one.
class DenseColumnSource {
 public:
  DenseColumnSource(const SparsityParams& params, std::uint64_t key) : key_(key), scale_(params.m) {
    for (Index j = 1; j <= params.m; ++j) scale_[j - 1] = std::sqrt(params.variance(j));
  }

  Index m() const noexcept { return scale_.size(); }

  /// Writes columns [first, first + block.cols()) into block.
  void fill(MatrixXd& block, Index first) const {
    for (Index c = 0; c < block.cols(); ++c) {
      Philox4x32 gen(key_, static_cast<std::uint64_t>(first + c));
      std::normal_distribution<double> normal(0.0, 1.0);
      double* col = block.col(c).data();
      for (Index j = 0; j < scale_.size(); ++j) col[j] = scale_[j] * normal(gen);
    }
  }

 private:
  std::uint64_t key_;
  VectorXd scale_;
};

inline DenseColumnSource dense_source(const SparsityParams& params, const SeedContext& ctx,
                                      StreamPurpose purpose = StreamPurpose::data) {
  return DenseColumnSource(params, ctx.key(purpose));
}

inline Dataset sample_dense_dataset(double alpha, Index m, Index d, const SeedContext& ctx,
                                    const SampleOptions& opts = {}) {
  if (!(alpha > 0.0)) throw std::invalid_argument("sample_dense_dataset: alpha must be > 0");
  if (d < 1) throw std::invalid_argument("sample_dense_dataset: d must be >= 1");
  Dataset ds;
  ds.kind = DataKind::dense_baseline;
  ds.params = dense_baseline_params(alpha, m);
  ds.params.validate();
  ds.seed = ctx.seed;
  ds.x_dense.resize(m, d);
  dense_source(ds.params, ctx).fill(ds.x_dense, 0);
  ds.teacher_w = sample_teacher(m, ctx, opts.teacher_std);
  ds.labels_y = compute_labels(ds.x_dense, ds.teacher_w);
  return ds;
}

inline Dataset sample_dense_dataset(double alpha, Index m, Index d, std::uint64_t seed) {
  return sample_dense_dataset(alpha, m, d, SeedContext{0, seed});
}

/// Rows with at least one nonzero.
/// Sorted; cost depends on nnz only, so huge M is fine.
inline std::vector<std::int64_t> active_rows(const SparseMatrix& x) {
  std::vector<std::int64_t> rows(x.innerIndexPtr(), x.innerIndexPtr() + x.nonZeros());
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

inline Index distinct_active_count(const SparseMatrix& x) { return static_cast<Index>(active_rows(x).size()); }

}  // namespace sparse_scaling
