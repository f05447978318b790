// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

/// @file calibration.hpp
/// Replaces reference spheres by Gaussians of equal perceived extent.
///
/// Seen by an orthographic camera, the visibility of a single Gaussian on a
/// ray at lateral offset d depends on the ray optical-depth scale
/// x(d) = c * sigma * exp(-d^2 / (2 sigma^2)) only:
///
///     V(x) = ell * x * sum_k w_k exp(-kappa_k x),
///     w_k = exp(-(k ell)^2 / 2),  kappa_k = sqrt(pi/2) (1 + erf(k ell / sqrt 2)).
///
/// The center constraint 1 - V(x(0)) = m fixes the product P = c * sigma, and
/// the inflection of the lateral profile sits at a fixed multiple u* of sigma
/// that depends on P alone, so sigma = r / u* and c = P / sigma.

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaussvis/scene.hpp"
#include "gaussvis/visibility.hpp"

namespace gaussvis {

struct SphereSpec {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  Vec3 albedo = Vec3::Ones();

  friend bool operator==(const SphereSpec&, const SphereSpec&) = default;
};

struct CalibrationResult {
  double magnitude = 0.0;
  double sigma = 0.0;
  double smoothness = 0.0;
  double radius = 0.0;
  double center_residual = 0.0;      ///< (1 - V(center)) - m
  double inflection_residual = 0.0;  ///< inflection offset - r
  int iterations = 0;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double r1, double r2)
      : std::runtime_error(what), residuals{r1, r2} {}
  double residuals[2];
};

/// Closed-form orthographic visibility of an isolated Gaussian as a function
/// of the optical-depth scale x = cbar * sigma, with its first three
/// derivatives.
class OrthoProfile {
 public:
  explicit OrthoProfile(const SampleScheme& scheme) : ell_(scheme.step) {
    validate(scheme);
    for (int k : scheme.offsets) {
      const double t = k * scheme.step;
      w_.push_back(std::exp(-0.5 * t * t));
      kappa_.push_back(kSqrtHalfPi * (1.0 + std::erf(t * kInvSqrt2)));
    }
  }

  /// Derivative `order` (0..3) of V with respect to x.
  double operator()(double x, int order = 0) const {
    double v = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) {
      const double k = kappa_[i];
      const double e = w_[i] * std::exp(-k * x);
      switch (order) {
        case 0: v += e * x; break;
        case 1: v += e * (1.0 - k * x); break;
        case 2: v += e * (k * k * x - 2.0 * k); break;
        default: v += e * (3.0 * k * k - k * k * k * x); break;
      }
    }
    return ell_ * v;
  }

  /// d^2 V/du^2 along the lateral offset u = d / sigma, for x = P exp(-u^2/2).
  double lateral_second(double product, double u) const {
    const double x = product * std::exp(-0.5 * u * u);
    return (*this)(x, 2) * u * u * x * x + (*this)(x, 1) * (u * u - 1.0) * x;
  }

  double lateral_third(double product, double u) const {
    const double x = product * std::exp(-0.5 * u * u);
    const double u2 = u * u;
    return -(*this)(x, 3) * u2 * u * x * x * x + (*this)(x, 2) * x * x * (3.0 * u - 3.0 * u2 * u) +
           (*this)(x, 1) * x * u * (3.0 - u2);
  }

 private:
  double ell_;
  std::vector<double> w_, kappa_;
};

namespace detail {

/// Damped Newton on a bracketed scalar root, falling back to bisection when
/// a step leaves the bracket.
template <class F, class DF>
double bracketed_newton(F f, DF df, double lo, double hi, int budget, double tol, int& iters) {
  double flo = f(lo);
  double x = 0.5 * (lo + hi);
  for (iters = 0; iters < budget; ++iters) {
    const double fx = f(x);
    if (std::abs(fx) < tol) return x;
    if ((fx < 0) == (flo < 0)) {
      lo = x;
      flo = fx;
    } else {
      hi = x;
    }
    const double d = df(x);
    double next = d != 0.0 ? x - fx / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < 1e-15 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  return x;
}

}  // namespace detail

struct CalibrationOptions {
  int budget = 200;
  double tolerance = 1e-12;
};

/// Solves for (c, sigma) such that the center transparency is m and the
/// outermost inflection of the lateral visibility profile is at distance r.
inline CalibrationResult calibrate_sphere(double r, double m, const SampleScheme& scheme = {},
                                          const CalibrationOptions& opt = {}) {
  if (!(r > 0.0)) throw std::invalid_argument("calibrate_sphere: radius must be positive");
  if (!(m > 0.0 && m < 1.0)) throw std::invalid_argument("calibrate_sphere: m must lie in (0,1)");
  const OrthoProfile profile(scheme);
  const double target = 1.0 - m;

  // Smallest x with V(x) = 1 - m: scan upward for the first crossing.
  auto center = [&](double x) { return profile(x) - target; };
  double lo = 0.0, hi = 0.0;
  {
    bool found = false;
    double prev_x = 0.0;
    for (int i = 1; i < 20000; ++i) {
      const double x = i <= 10000 ? i * 1e-2 : prev_x * 1.001;
      if (center(x) >= 0.0) {
        lo = prev_x;
        hi = x;
        found = true;
        break;
      }
      prev_x = x;
    }
    if (!found) throw SolverError("calibrate_sphere: center transparency unreachable", -target, 0.0);
  }
  int it1 = 0;
  const double product = detail::bracketed_newton(
      center, [&](double x) { return profile(x, 1); }, lo, hi, opt.budget, opt.tolerance, it1);
  const double r1 = center(product);

  // Outermost inflection: first sign change of d^2V/du^2 scanning inward.
  auto second = [&](double u) { return profile.lateral_second(product, u); };
  const double du = 1e-3;
  double ulo = 0.0, uhi = 0.0;
  bool found = false;
  double prev = second(10.0);
  for (double u = 10.0 - du; u > du; u -= du) {
    const double cur = second(u);
    if ((prev < 0) != (cur < 0) && prev != 0.0) {
      ulo = u;
      uhi = u + du;
      found = true;
      break;
    }
    prev = cur;
  }
  if (!found) throw SolverError("calibrate_sphere: no inflection in the lateral profile", r1, 0.0);
  int it2 = 0;
  const double u_star = detail::bracketed_newton(
      second, [&](double u) { return profile.lateral_third(product, u); }, ulo, uhi, opt.budget,
      1e-14, it2);

  CalibrationResult res;
  res.sigma = r / u_star;
  res.magnitude = product / res.sigma;
  res.smoothness = m;
  res.radius = r;
  res.center_residual = r1;
  res.inflection_residual = 0.0;
  res.iterations = it1 + it2;
  const double s2 = second(u_star);
  if (it1 >= opt.budget || it2 >= opt.budget || std::abs(r1) > 1e-9) {
    std::ostringstream os;
    os << "calibrate_sphere: no convergence (center residual " << r1 << ", inflection curvature "
       << s2 << ")";
    throw SolverError(os.str(), r1, s2);
  }
  return res;
}

/// Center visibility of a Gaussian under orthographic viewing.
inline double orthographic_center_visibility(double magnitude, double sigma,
                                             const SampleScheme& scheme = {}) {
  return OrthoProfile(scheme)(magnitude * sigma);
}

/// d c / d sigma when the magnitude is re-derived from the center constraint,
/// i.e. c * sigma held at its calibrated value.
inline double calibrated_magnitude_slope(const Gaussian& g) { return -g.magnitude / g.sigma; }

/// Calibrates each distinct radius once; safe for concurrent use.
class Calibrator {
 public:
  Calibrator(double m, SampleScheme scheme = {}) : m_(m), scheme_(std::move(scheme)) {}

  CalibrationResult operator()(double r) const {
    {
      std::shared_lock lock(mutex_);
      auto it = cache_.find(r);
      if (it != cache_.end()) return it->second;
    }
    CalibrationResult res = calibrate_sphere(r, m_, scheme_);
    std::unique_lock lock(mutex_);
    return cache_.emplace(r, res).first->second;
  }

  double smoothness() const { return m_; }
  std::size_t cached() const {
    std::shared_lock lock(mutex_);
    return cache_.size();
  }

 private:
  double m_;
  SampleScheme scheme_;
  mutable std::shared_mutex mutex_;
  mutable std::map<double, CalibrationResult> cache_;
};

inline Scene build_from_spheres(const std::vector<SphereSpec>& spheres, double m,
                                const SampleScheme& scheme = {}) {
  Calibrator cal(m, scheme);
  Scene scene;
  scene.smoothness = m;
  scene.gaussians.reserve(spheres.size());
  for (const auto& s : spheres) {
    if (!(s.radius > 0.0)) throw std::invalid_argument("sphere.radius must be positive");
    const CalibrationResult c = cal(s.radius);
    scene.gaussians.push_back(Gaussian{c.magnitude, s.center, c.sigma, s.albedo});
  }
  return scene;
}

}  // namespace gaussvis
