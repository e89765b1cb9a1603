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

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparse_scaling {

struct ScalePoint {
  double scale = 0.0;
  double loss = 0.0;
  bool diverged = false;
};

using Series = std::vector<ScalePoint>;

/// Power law loss = 10^{intercept} * scale^{-exponent}, fitted on natural-log axes.
/// Intercepts are reported in base 10, one per series.
struct ExponentFit {
  double exponent = 0.0;
  std::vector<double> intercepts;
  int tail_count = 0;
  double residual_rms = 0.0;                                       // natural-log units
  double stderr_exponent = std::numeric_limits<double>::quiet_NaN();  // NaN with no spare degrees of freedom
  int excluded = 0;  // diverged or non-finite points dropped before fitting
};

inline constexpr int kTailCountPinv = 6;
inline constexpr int kTailCountNesterov = 4;

/// Drops diverged, non-finite and non-positive losses; returns how many were dropped.
inline int drop_invalid(Series& s) {
  const std::size_t before = s.size();
  std::erase_if(s, [](const ScalePoint& p) { return p.diverged || !std::isfinite(p.loss) || !(p.loss > 0.0); });
  return static_cast<int>(before - s.size());
}

namespace detail {

inline void check_series(const Series& s, int tail_count) {
  if (tail_count < 2) throw std::invalid_argument("fit: tail_count must be >= 2");
  if (static_cast<int>(s.size()) < tail_count)
    throw std::invalid_argument("fit: fewer valid points (" + std::to_string(s.size()) + ") than tail_count (" +
                                std::to_string(tail_count) + ")");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s[i].loss > 0.0) || !std::isfinite(s[i].loss)) throw std::domain_error("fit: losses must be positive and finite");
    if (!(s[i].scale > 0.0)) throw std::domain_error("fit: scales must be positive");
    if (i > 0 && !(s[i].scale > s[i - 1].scale)) throw std::invalid_argument("fit: scales must be strictly increasing");
  }
}

}  // namespace detail

/// Shared-slope least squares with one intercept per series, over the last tail_count
/// points of each series. A single series reduces to an ordinary fit.
inline ExponentFit joint_fit(const std::vector<Series>& series, int tail_count) {
  if (series.empty()) throw std::invalid_argument("joint_fit: no series");
  std::vector<std::vector<double>> xs, ys;
  double sxx = 0.0, sxy = 0.0;
  std::size_t n = 0;
  for (const Series& s : series) {
    detail::check_series(s, tail_count);
    std::vector<double> x, y;
    for (std::size_t i = s.size() - static_cast<std::size_t>(tail_count); i < s.size(); ++i) {
      x.push_back(std::log(s[i].scale));
      y.push_back(std::log(s[i].loss));
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i];
      my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      sxy += (x[i] - mx) * (y[i] - my);
    }
    n += x.size();
    xs.push_back(std::move(x));
    ys.push_back(std::move(y));
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit: degenerate scales");
  const double slope = sxy / sxx;

  ExponentFit fit;
  fit.exponent = -slope;
  fit.tail_count = tail_count;
  double rss = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs[k].size(); ++i) {
      mx += xs[k][i];
      my += ys[k][i];
    }
    mx /= static_cast<double>(xs[k].size());
    my /= static_cast<double>(ys[k].size());
    const double icpt = my - slope * mx;
    fit.intercepts.push_back(icpt / std::log(10.0));
    for (std::size_t i = 0; i < xs[k].size(); ++i) {
      const double r = ys[k][i] - icpt - slope * xs[k][i];
      rss += r * r;
    }
  }
  fit.residual_rms = std::sqrt(rss / static_cast<double>(n));
  const std::size_t dof = n - xs.size() - 1;
  if (n > xs.size() + 1) fit.stderr_exponent = std::sqrt(rss / static_cast<double>(dof) / sxx);
  return fit;
}

inline ExponentFit loglog_fit(const Series& points, int tail_count) { return joint_fit({points}, tail_count); }

/// Like joint_fit, after dropping invalid points; the dropped count is reported.
inline ExponentFit joint_fit_valid(std::vector<Series> series, int tail_count) {
  int dropped = 0;
  for (Series& s : series) dropped += drop_invalid(s);
  ExponentFit f = joint_fit(series, tail_count);
  f.excluded = dropped;
  return f;
}

inline ExponentFit loglog_fit_valid(Series points, int tail_count) { return joint_fit_valid({std::move(points)}, tail_count); }

}  // namespace sparse_scaling
