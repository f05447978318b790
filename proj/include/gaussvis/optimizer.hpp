// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

/// @file optimizer.hpp
/// Preconditioned nonlinear conjugate gradient (Polak-Ribiere+) with a
/// backtracking Armijo line search.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaussvis/energy.hpp"

namespace gaussvis {

enum class Preconditioner { none, diagonal };

struct OptimConfig {
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;  ///< on the Euclidean gradient norm
  double initial_step = 1.0;         ///< first trial step along the first direction
  double sufficient_decrease = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;
  int restart_interval = 0;  ///< 0: dim(theta)
  Preconditioner preconditioner = Preconditioner::diagonal;
  double max_step = std::numeric_limits<double>::infinity();  ///< cap on |alpha d|
  bool refine_step = true;     ///< try the quadratic-interpolation minimizer once
  /// Evaluate gradients at every line-search trial (cheaper when the first
  /// trial is usually accepted and a gradient costs about one evaluation).
  bool gradient_in_line_search = false;
  bool keep_theta = false;     ///< store theta in every trace record
  std::uint64_t seed = 0;

  friend bool operator==(const OptimConfig&, const OptimConfig&) = default;
};

inline void validate(const OptimConfig& c) {
  if (c.max_iterations < 0) throw std::invalid_argument("optimizer.max_iterations must be >= 0");
  if (!(c.gradient_tolerance > 0.0)) throw std::invalid_argument("optimizer.gradient_tolerance must be > 0");
  if (!(c.initial_step > 0.0)) throw std::invalid_argument("optimizer.initial_step must be > 0");
  if (!(c.sufficient_decrease > 0.0 && c.sufficient_decrease < 1.0))
    throw std::invalid_argument("optimizer.sufficient_decrease must lie in (0,1)");
  if (!(c.backtrack > 0.0 && c.backtrack < 1.0))
    throw std::invalid_argument("optimizer.backtrack must lie in (0,1)");
  if (c.restart_interval < 0) throw std::invalid_argument("optimizer.restart_interval must be >= 0");
  if (!(c.max_step > 0.0)) throw std::invalid_argument("optimizer.max_step must be > 0");
}

enum class StopReason { gradient_tolerance, max_iterations, line_search_failed, non_finite };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::gradient_tolerance: return "gradient_tolerance";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::line_search_failed: return "line_search_failed";
    default: return "non_finite";
  }
}

struct TraceRecord {
  int iteration = 0;
  double energy = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;  ///< |theta_k - theta_{k-1}|
  std::vector<double> theta;
};

struct OptimTrace {
  std::vector<TraceRecord> records;
  StopReason reason = StopReason::max_iterations;
  std::uint64_t seed = 0;
  int evaluations = 0;

  void write_csv(std::ostream& os) const {
    const auto old = os.precision(17);
    os << "iteration,energy,grad_norm,step\n";
    for (const auto& r : records) os << r.iteration << ',' << r.energy << ',' << r.grad_norm << ',' << r.step << '\n';
    os.precision(old);
  }
};

struct OptimResult {
  std::vector<double> theta;
  double energy = 0.0;
  OptimTrace trace;
  bool aborted() const { return trace.reason == StopReason::non_finite; }
};

/// Objective callbacks. value_and_gradient must resize its output.
struct Objective {
  std::function<double(std::span<const double>)> value;
  std::function<double(std::span<const double>, std::vector<double>&)> value_and_gradient;
};

inline Objective make_objective(const PoseObjective& f) {
  return Objective{[&f](std::span<const double> t) { return f.value(t); },
                   [&f](std::span<const double> t, std::vector<double>& g) { return f.value_and_gradient(t, g); }};
}

struct LineSearchResult {
  double alpha = 0.0;
  double value = 0.0;
  std::vector<double> gradient;  ///< at the accepted point, when requested
  int evaluations = 0;
  bool success = false;
};

using ValueFn = std::function<double(std::span<const double>)>;
using ValueGradFn = std::function<double(std::span<const double>, std::vector<double>&)>;

/// Backtracking Armijo search along d from x with f(x) = f0 and slope g^T d < 0.
/// Each rejected trial shrinks alpha to the minimizer of the quadratic through
/// f0, the slope and the trial value, clamped to [0.1, backtrack] alpha. With
/// refine_step the interpolated minimizer of an accepted step, capped at four
/// times that step and at max_step, is tried once.
///
/// When `fg` is given every trial also evaluates the gradient and the result
/// carries the gradient of the accepted point; otherwise only `f` is called.
inline LineSearchResult line_search(const ValueFn& f, const ValueGradFn* fg, std::span<const double> x,
                                    std::span<const double> d, double f0, double slope, double alpha0,
                                    const OptimConfig& cfg) {
  LineSearchResult res;
  if (!(slope < 0.0)) return res;
  std::vector<double> trial(x.size()), grad;
  auto eval = [&](double a) {
    for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] + a * d[i];
    ++res.evaluations;
    return fg ? (*fg)(trial, grad) : f(trial);
  };
  auto armijo = [&](double a, double fa) {
    return std::isfinite(fa) && fa <= f0 + cfg.sufficient_decrease * a * slope;
  };
  double dn = 0.0;
  for (double v : d) dn += v * v;
  dn = std::sqrt(dn);
  const double max_alpha = dn > 0.0 ? cfg.max_step / dn : std::numeric_limits<double>::infinity();
  double alpha = alpha0;
  for (int b = 0; b <= cfg.max_backtracks; ++b) {
    const double fa = eval(alpha);
    if (armijo(alpha, fa)) {
      res.alpha = alpha;
      res.value = fa;
      res.gradient = grad;
      res.success = true;
      if (cfg.refine_step) {
        // Quadratic minimizer, or expansion when the model has no minimum
        // within four times the accepted step.
        const double curv = fa - f0 - slope * alpha;
        double aq = curv > 0.0 ? -slope * alpha * alpha / (2.0 * curv) : 4.0 * alpha;
        aq = std::min({aq, 4.0 * alpha, max_alpha});
        if (aq > 0.0 && std::abs(aq - alpha) > 1e-3 * alpha) {
          const double fq = eval(aq);
          if (fq < fa && armijo(aq, fq)) {
            res.alpha = aq;
            res.value = fq;
            res.gradient = grad;
          }
        }
      }
      return res;
    }
    double next = cfg.backtrack * alpha;
    if (std::isfinite(fa)) {
      const double curv = fa - f0 - slope * alpha;
      if (curv > 0.0) next = std::clamp(-slope * alpha * alpha / (2.0 * curv), 0.1 * alpha, cfg.backtrack * alpha);
    }
    alpha = next;
  }
  return res;
}

/// Value-only variant.
inline LineSearchResult line_search(const ValueFn& f, std::span<const double> x, std::span<const double> d,
                                    double f0, double slope, double alpha0, const OptimConfig& cfg) {
  return line_search(f, nullptr, x, d, f0, slope, alpha0, cfg);
}

namespace detail {
inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}
}  // namespace detail

/// Minimizes the objective from theta0. The returned theta never has a larger
/// objective than theta0.
inline OptimResult minimize(const Objective& obj, std::vector<double> theta0, const OptimConfig& cfg = {}) {
  validate(cfg);
  const std::size_t n = theta0.size();
  const int restart = cfg.restart_interval > 0 ? cfg.restart_interval : static_cast<int>(std::max<std::size_t>(n, 1));

  OptimResult out;
  out.trace.seed = cfg.seed;
  std::vector<double> x = std::move(theta0);
  std::vector<double> g;
  double f = obj.value_and_gradient(x, g);
  ++out.trace.evaluations;
  auto record = [&](int it, double step) {
    TraceRecord r{it, f, detail::norm(g), step, {}};
    if (cfg.keep_theta) r.theta = x;
    out.trace.records.push_back(std::move(r));
  };
  out.theta = x;
  out.energy = f;
  if (!std::isfinite(f) || !detail::all_finite(g)) {
    out.trace.reason = StopReason::non_finite;
    record(0, 0.0);
    return out;
  }
  record(0, 0.0);

  // Diagonal scaling from a running mean of squared gradient components. The
  // scale is refreshed only at restarts so each conjugate cycle sees one
  // fixed metric.
  std::vector<double> v(n, 0.0), scale(n, 1.0), z(n), d(n), g_prev, z_prev;
  auto track_moments = [&](bool first) {
    for (std::size_t i = 0; i < n; ++i) v[i] = first ? g[i] * g[i] : 0.9 * v[i] + 0.1 * g[i] * g[i];
  };
  auto refresh_scale = [&] {
    if (cfg.preconditioner == Preconditioner::diagonal)
      for (std::size_t i = 0; i < n; ++i) scale[i] = std::max(std::sqrt(v[i]), 1e-8);
  };
  auto precondition = [&] {
    for (std::size_t i = 0; i < n; ++i) z[i] = g[i] / scale[i];
  };
  track_moments(true);
  refresh_scale();
  precondition();
  for (std::size_t i = 0; i < n; ++i) d[i] = -z[i];

  double prev_alpha = cfg.initial_step;
  double prev_slope = 0.0;
  int since_restart = 0;
  out.trace.reason = StopReason::max_iterations;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    if (detail::norm(g) < cfg.gradient_tolerance) {
      out.trace.reason = StopReason::gradient_tolerance;
      break;
    }
    double slope = detail::dot(g, d);
    if (!(slope < 0.0)) {
      refresh_scale();
      precondition();
      for (std::size_t i = 0; i < n; ++i) d[i] = -z[i];
      slope = detail::dot(g, d);
      since_restart = 0;
    }
    double alpha0 = it == 1 ? cfg.initial_step : prev_alpha * prev_slope / slope;
    if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) alpha0 = cfg.initial_step;
    const double dn = detail::norm(d);
    if (alpha0 * dn > cfg.max_step) alpha0 = cfg.max_step / dn;

    const LineSearchResult ls = line_search(obj.value, cfg.gradient_in_line_search ? &obj.value_and_gradient : nullptr,
                                            x, d, f, slope, alpha0, cfg);
    out.trace.evaluations += ls.evaluations;
    if (!ls.success) {
      out.trace.reason = StopReason::line_search_failed;
      break;
    }
    std::vector<double> x_new(n);
    for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + ls.alpha * d[i];
    std::vector<double> g_new = ls.gradient;
    double f_new = ls.value;
    if (!cfg.gradient_in_line_search) {
      f_new = obj.value_and_gradient(x_new, g_new);
      ++out.trace.evaluations;
    }
    if (!std::isfinite(f_new) || !detail::all_finite(g_new)) {
      out.trace.reason = StopReason::non_finite;
      break;
    }
    g_prev = std::move(g);
    z_prev = z;
    x = std::move(x_new);
    f = f_new;
    g = std::move(g_new);
    record(it, ls.alpha * dn);
    out.theta = x;
    out.energy = f;

    track_moments(false);
    prev_alpha = ls.alpha;
    prev_slope = slope;
    double beta = 0.0;
    if (++since_restart < restart) {
      precondition();
      const double den = detail::dot(z_prev, g_prev);
      double num = 0.0;
      for (std::size_t i = 0; i < n; ++i) num += z[i] * (g[i] - g_prev[i]);
      beta = den > 0.0 ? std::max(0.0, num / den) : 0.0;
    } else {
      since_restart = 0;
      refresh_scale();
      precondition();
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = -z[i] + beta * d[i];
  }
  return out;
}

/// Tracks a frame sequence: frame t starts from the result of frame t-1 and
/// sees the previous results as prior history.
inline std::vector<OptimResult> track_sequence(std::vector<PoseObjective>& frames,
                                               std::vector<double> theta0, const OptimConfig& cfg = {}) {
  std::vector<OptimResult> out;
  std::vector<std::vector<double>> history;
  for (auto& frame : frames) {
    frame.set_history(history);
    OptimResult r = minimize(make_objective(frame), theta0, cfg);
    theta0 = r.theta;
    history.insert(history.begin(), r.theta);
    if (history.size() > 2) history.pop_back();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace gaussvis
