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
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "datagen.hpp"
#include "fitting.hpp"
#include "sweep.hpp"
#include "theory.hpp"

namespace sparse_scaling {

/// Seed-averaged loss at one (N, D).
struct GridMean {
  Index n = 0;
  Index d = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double loss_sem = std::numeric_limits<double>::quiet_NaN();  // standard error over seeds
  int seeds = 0;     // valid seeds averaged
  int excluded = 0;  // diverged, failed or non-finite
  double compute = 0.0;
  double xi = 0.0;
};

/// Averages valid records over seeds, keeping first-appearance order of (N, D).
inline std::vector<GridMean> seed_average(const std::vector<SweepRecord>& records) {
  std::vector<GridMean> out;
  std::map<std::pair<Index, Index>, std::size_t> slot;
  std::vector<std::vector<double>> losses;
  for (const SweepRecord& r : records) {
    auto [it, fresh] = slot.emplace(std::make_pair(r.n, r.d), out.size());
    if (fresh) {
      GridMean g;
      g.n = r.n;
      g.d = r.d;
      g.compute = r.compute;
      g.xi = r.xi;
      out.push_back(g);
      losses.emplace_back();
    }
    if (r.valid())
      losses[it->second].push_back(r.loss);
    else
      ++out[it->second].excluded;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::vector<double>& v = losses[i];
    out[i].seeds = static_cast<int>(v.size());
    if (v.empty()) continue;
    double s = 0.0;
    for (double x : v) s += x;
    const double mean = s / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    out[i].loss = mean;
    if (v.size() > 1) out[i].loss_sem = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return out;
}

enum class ScaleAxis { n, d };

/// Seed-averaged losses as a fitting series along N or D, sorted by scale.
/// Grid points with no valid seed are carried as diverged so fitting reports them.
inline Series to_series(const std::vector<GridMean>& means, ScaleAxis axis) {
  Series s;
  for (const GridMean& g : means) {
    ScalePoint p;
    p.scale = static_cast<double>(axis == ScaleAxis::n ? g.n : g.d);
    p.loss = g.loss;
    p.diverged = g.seeds == 0;
    s.push_back(p);
  }
  std::sort(s.begin(), s.end(), [](const ScalePoint& a, const ScalePoint& b) { return a.scale < b.scale; });
  return s;
}

inline Series to_series(const std::vector<SweepRecord>& records, ScaleAxis axis) {
  return to_series(seed_average(records), axis);
}

struct CollapsePoint {
  double xi = 0.0;
  double rescaled_loss = 0.0;
  Index n = 0;  // family
  Index d = 0;
  std::uint64_t seed = 0;
};

/// (xi, loss * N^{alpha_N}) for every valid record; the family of a point is its N.
inline std::vector<CollapsePoint> collapse_transform(const std::vector<SweepRecord>& records, const SparsityParams& p) {
  if (!(p.alpha1 > 0.0)) throw std::domain_error("collapse_transform: requires alpha1 > 0");
  const double an = predicted_exponents(p).alpha_n;
  std::vector<CollapsePoint> out;
  for (const SweepRecord& r : records) {
    if (!r.valid()) continue;
    CollapsePoint c;
    c.n = r.n;
    c.d = r.d;
    c.seed = r.seed;
    c.xi = collapse_variable(p, static_cast<double>(r.n), static_cast<double>(r.d));
    c.rescaled_loss = r.loss * std::pow(static_cast<double>(r.n), an);
    out.push_back(c);
  }
  return out;
}

/// One family's seed-averaged curve, sorted by xi.
struct CollapseCurve {
  Index n = 0;
  std::vector<double> xi;
  std::vector<double> rescaled;
};

inline std::vector<CollapseCurve> collapse_curves(const std::vector<SweepRecord>& records, const SparsityParams& p) {
  const double an = predicted_exponents(p).alpha_n;
  std::map<Index, CollapseCurve> fam;
  for (const GridMean& g : seed_average(records)) {
    if (g.seeds == 0) continue;
    CollapseCurve& c = fam[g.n];
    c.n = g.n;
    c.xi.push_back(collapse_variable(p, static_cast<double>(g.n), static_cast<double>(g.d)));
    c.rescaled.push_back(g.loss * std::pow(static_cast<double>(g.n), an));
  }
  std::vector<CollapseCurve> out;
  for (auto& [n, c] : fam) {
    std::vector<std::size_t> idx(c.xi.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return c.xi[a] < c.xi[b]; });
    CollapseCurve s;
    s.n = n;
    for (std::size_t i : idx) {
      s.xi.push_back(c.xi[i]);
      s.rescaled.push_back(c.rescaled[i]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Log-log linear interpolation of a curve; NaN outside its xi range.
/// Points within 2% beyond either end snap to that end, so that rounding D to an
/// integer does not drop a family from the smallest or largest xi.
inline double interpolate_curve(const CollapseCurve& c, double xi) {
  constexpr double kEndSlack = 1.02;
  if (c.xi.empty() || xi < c.xi.front() / kEndSlack || xi > c.xi.back() * kEndSlack)
    return std::numeric_limits<double>::quiet_NaN();
  xi = std::clamp(xi, c.xi.front(), c.xi.back());
  auto hi = std::lower_bound(c.xi.begin(), c.xi.end(), xi);
  const std::size_t k = static_cast<std::size_t>(hi - c.xi.begin());
  if (c.xi[k] == xi || k == 0) return c.rescaled[k];
  const double t = std::log(xi / c.xi[k - 1]) / std::log(c.xi[k] / c.xi[k - 1]);
  return std::exp((1.0 - t) * std::log(c.rescaled[k - 1]) + t * std::log(c.rescaled[k]));
}

struct CollapseOverlay {
  double xi = 0.0;
  double spread = 0.0;  // (max - min) / mean over families covering xi
  double mean = 0.0;
  int families = 0;
};

/// Relative spread across families at each requested xi.
inline std::vector<CollapseOverlay> collapse_overlay(const std::vector<CollapseCurve>& curves, const std::vector<double>& xis) {
  std::vector<CollapseOverlay> out;
  for (double xi : xis) {
    CollapseOverlay o;
    o.xi = xi;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, s = 0.0;
    for (const CollapseCurve& c : curves) {
      const double v = interpolate_curve(c, xi);
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      s += v;
      ++o.families;
    }
    if (o.families > 0) {
      o.mean = s / o.families;
      o.spread = (hi - lo) / o.mean;
    }
    out.push_back(o);
  }
  return out;
}

/// Interior local maxima of a curve given as parallel (x sorted) arrays.
inline std::vector<std::size_t> local_maxima(const std::vector<double>& y) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < y.size(); ++i)
    if (y[i] > y[i - 1] && y[i] > y[i + 1]) out.push_back(i);
  return out;
}

struct FrontierPoint {
  double compute = 0.0;
  double min_loss = 0.0;
  Index n = 0;  // where the envelope value was attained
  Index d = 0;
};

/// Lower envelope of seed-averaged loss over compute C = N D min(N, D).
/// Points are binned on log10 C (bins_per_decade > 0) keeping the best point of each bin,
/// then made non-increasing by a running minimum.
inline std::vector<FrontierPoint> compute_frontier(const std::vector<SweepRecord>& records, int bins_per_decade = 8) {
  if (bins_per_decade < 1) throw std::invalid_argument("compute_frontier: bins_per_decade must be >= 1");
  std::map<long, FrontierPoint> bins;
  for (const GridMean& g : seed_average(records)) {
    if (g.seeds == 0) continue;
    const long b = static_cast<long>(std::floor(std::log10(g.compute) * bins_per_decade + 1e-9));
    auto it = bins.find(b);
    if (it == bins.end() || g.loss < it->second.min_loss) bins[b] = FrontierPoint{g.compute, g.loss, g.n, g.d};
  }
  std::vector<FrontierPoint> out;
  for (const auto& [b, p] : bins) {
    FrontierPoint q = p;
    if (!out.empty() && out.back().min_loss < q.min_loss) {
      q.min_loss = out.back().min_loss;
      q.n = out.back().n;
      q.d = out.back().d;
    }
    out.push_back(q);
  }
  return out;
}

struct FrontierSlope {
  ExponentFit fit;        // exponent is -slope, so the frontier slope is -fit.exponent
  double c_low = 0.0;     // fitted window [c_low, c_high]
  double c_high = 0.0;
  double c_saturation = 0.0;
  std::size_t points = 0;
};

/// Slope of the envelope over the top `decades` of compute, ending where the largest-N
/// family reaches its lowest loss. Beyond that compute no sampled family can improve,
/// so the envelope is flat for lack of larger models, not because of the scaling law.
inline FrontierSlope frontier_slope(const std::vector<SweepRecord>& records, double decades = 1.0, int bins_per_decade = 8) {
  const std::vector<GridMean> means = seed_average(records);
  Index n_max = 0;
  for (const GridMean& g : means) n_max = std::max(n_max, g.n);
  double best = std::numeric_limits<double>::infinity(), c_sat = 0.0;
  for (const GridMean& g : means)
    if (g.n == n_max && g.seeds > 0 && g.loss < best) {
      best = g.loss;
      c_sat = g.compute;
    }
  FrontierSlope out;
  out.c_saturation = c_sat;
  out.c_high = c_sat;
  out.c_low = c_sat / std::pow(10.0, decades);
  Series s;
  for (const FrontierPoint& p : compute_frontier(records, bins_per_decade))
    if (p.compute >= out.c_low * (1.0 - 1e-12) && p.compute <= out.c_high * (1.0 + 1e-12)) s.push_back({p.compute, p.min_loss, false});
  out.points = s.size();
  if (s.size() < 2) throw std::runtime_error("frontier_slope: fewer than two envelope points in the window");
  out.fit = loglog_fit(s, static_cast<int>(s.size()));
  return out;
}

}  // namespace sparse_scaling
