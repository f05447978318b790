// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

// Independent numerical reference computations used by the tests. Nothing
// here reuses the closed forms of the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "gaussvis/imaging.hpp"
#include "gaussvis/scene.hpp"

namespace oracle {

using gaussvis::RayGaussian;

namespace detail {

inline double simpson(const std::function<double(double)>& f, double a, double fa, double m, double fm,
                      double b, double fb, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b] with Richardson correction.
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-13,
                        int depth = 50) {
  if (b == a) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson(f, a, fa, m, fm, b, fb, whole, tol, depth);
}

/// Integral over [a, b] split at the support landmarks of every 1D Gaussian
/// so that narrow bumps are never stepped over.
inline double integrate_piecewise(const std::function<double(double)>& f, std::span<const RayGaussian> g,
                                  double a, double b, double tol = 1e-13) {
  std::vector<double> cuts{a, b};
  for (const auto& p : g)
    for (double k : {-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0}) {
      const double c = p.mubar + k * p.sigmabar;
      if (c > a && c < b) cuts.push_back(c);
    }
  std::sort(cuts.begin(), cuts.end());
  double sum = 0.0;
  for (std::size_t i = 1; i < cuts.size(); ++i)
    sum += integrate(f, cuts[i - 1], cuts[i], tol / static_cast<double>(cuts.size()));
  return sum;
}

inline double density(std::span<const RayGaussian> g, double s) {
  double d = 0.0;
  for (const auto& p : g) {
    const double t = (s - p.mubar) / p.sigmabar;
    d += p.cbar * std::exp(-0.5 * t * t);
  }
  return d;
}

/// T(s) = exp(-integral_0^s D) by quadrature.
inline double transmittance(std::span<const RayGaussian> g, double s) {
  return std::exp(-integrate_piecewise([&](double t) { return density(g, t); }, g, 0.0, s));
}

/// Exact (unsampled) visibility of Gaussian q: integral of T(s) G_q(s) over
/// [0, inf), by a dense midpoint Riemann sum with the transmittance carried
/// along incrementally.
inline double dense_gaussian_visibility(std::span<const RayGaussian> g, std::size_t q, double ds = 1e-4) {
  double hi = 0.0;
  for (const auto& p : g) hi = std::max(hi, p.mubar + 12.0 * p.sigmabar);
  double tau = 0.0, v = 0.0;
  const auto& gq = g[q];
  for (double s = 0.0; s < hi; s += ds) {
    const double mid = s + 0.5 * ds;
    const double d = density(g, mid);
    const double t = std::exp(-(tau + 0.5 * d * ds));
    const double z = (mid - gq.mubar) / gq.sigmabar;
    v += t * gq.cbar * std::exp(-0.5 * z * z) * ds;
    tau += d * ds;
  }
  return v;
}

/// Radius of the outermost inflection of a radially symmetric profile v(d),
/// found by second differences on a uniform grid of spacing h over [h, dmax]
/// with linear interpolation of the last sign change.
inline double outermost_inflection(const std::function<double(double)>& v, double dmax, double h = 1e-3) {
  const int n = static_cast<int>(dmax / h);
  std::vector<double> vals(n + 2);
  for (int i = 0; i < n + 2; ++i) vals[i] = v(i * h);
  double prev = 0.0;
  double found = -1.0;
  for (int i = 1; i <= n; ++i) {
    const double d2 = (vals[i + 1] - 2.0 * vals[i] + vals[i - 1]) / (h * h);
    if (i > 1 && (d2 < 0) != (prev < 0) && std::abs(d2) > 1e-9) {
      const double t = prev / (prev - d2);
      found = (i - 1 + t) * h;
    }
    prev = d2;
  }
  return found;
}

inline gaussvis::Vec3 random_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return gaussvis::Vec3(u(rng), u(rng), u(rng));
}

/// Random 1D ray Gaussians in front of the eye.
inline std::vector<RayGaussian> random_ray(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> c(0.0, 3.0), mu(0.5, 10.0), sig(0.1, 1.5);
  std::vector<RayGaussian> g;
  for (int i = 0; i < n; ++i) g.push_back(RayGaussian{c(rng), mu(rng), sig(rng), static_cast<std::size_t>(i)});
  return g;
}

}  // namespace oracle
