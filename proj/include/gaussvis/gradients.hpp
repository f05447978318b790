// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

/// @file gradients.hpp
/// Closed-form derivatives of transmittance, Gaussian visibility and radiance
/// with respect to ray-space and world-space Gaussian parameters, plus a
/// central-difference verification harness.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaussvis/scene.hpp"
#include "gaussvis/visibility.hpp"

namespace gaussvis {

// ---------------------------------------------------------------------------
// Parameter identifiers

enum class RayField { cbar, mubar, sigmabar };

/// Identifies one 1D ray-space parameter: field of projected Gaussian `index`.
struct RayParamId {
  std::size_t index = 0;
  RayField field = RayField::cbar;
};

/// Layout of one Gaussian's block in a flat scene parameter vector.
enum class SceneField : int { magnitude = 0, mu_x, mu_y, mu_z, sigma, albedo_r, albedo_g, albedo_b };
inline constexpr std::size_t kFieldsPerGaussian = 8;

struct GaussianGrad {
  double magnitude = 0.0;
  Vec3 center = Vec3::Zero();
  double sigma = 0.0;
  Vec3 albedo = Vec3::Zero();

  GaussianGrad& operator+=(const GaussianGrad& o) {
    magnitude += o.magnitude;
    center += o.center;
    sigma += o.sigma;
    albedo += o.albedo;
    return *this;
  }
  bool all_finite() const {
    return std::isfinite(magnitude) && center.allFinite() && std::isfinite(sigma) &&
           albedo.allFinite();
  }
};

/// Gradient with respect to every Gaussian parameter, one block per Gaussian
/// in scene order.
struct GradVector {
  std::vector<GaussianGrad> blocks;

  GradVector() = default;
  explicit GradVector(std::size_t n) : blocks(n) {}

  std::size_t size() const { return blocks.size(); }
  GradVector& operator+=(const GradVector& o) {
    if (o.blocks.size() != blocks.size()) throw std::invalid_argument("GradVector size mismatch");
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i] += o.blocks[i];
    return *this;
  }
  bool all_finite() const {
    return std::all_of(blocks.begin(), blocks.end(), [](const auto& b) { return b.all_finite(); });
  }

  /// Flat layout matching scene_parameters().
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(blocks.size() * kFieldsPerGaussian);
    for (const auto& b : blocks) {
      out.push_back(b.magnitude);
      out.insert(out.end(), {b.center.x(), b.center.y(), b.center.z(), b.sigma});
      out.insert(out.end(), {b.albedo.x(), b.albedo.y(), b.albedo.z()});
    }
    return out;
  }
};

inline std::vector<double> scene_parameters(const Scene& s) {
  std::vector<double> out;
  out.reserve(s.size() * kFieldsPerGaussian);
  for (const auto& g : s.gaussians) {
    out.push_back(g.magnitude);
    out.insert(out.end(), {g.center.x(), g.center.y(), g.center.z(), g.sigma});
    out.insert(out.end(), {g.albedo.x(), g.albedo.y(), g.albedo.z()});
  }
  return out;
}

inline Scene with_scene_parameters(Scene s, std::span<const double> gamma) {
  if (gamma.size() != s.size() * kFieldsPerGaussian)
    throw std::invalid_argument("scene parameter vector has wrong length");
  for (std::size_t q = 0; q < s.size(); ++q) {
    const double* v = &gamma[q * kFieldsPerGaussian];
    auto& g = s.gaussians[q];
    g.magnitude = v[0];
    g.center = Vec3(v[1], v[2], v[3]);
    g.sigma = v[4];
    g.albedo = Vec3(v[5], v[6], v[7]);
  }
  return s;
}

inline std::string scene_field_name(std::size_t flat_index) {
  static constexpr std::array<const char*, kFieldsPerGaussian> names{
      "c", "mu.x", "mu.y", "mu.z", "sigma", "a.r", "a.g", "a.b"};
  return "g" + std::to_string(flat_index / kFieldsPerGaussian) + "." +
         names[flat_index % kFieldsPerGaussian];
}

/// Parses "g<q>.<field>" as produced by scene_field_name().
inline std::optional<std::size_t> parse_scene_field(const std::string& id) {
  if (id.size() < 4 || id[0] != 'g') return std::nullopt;
  const auto dot = id.find('.');
  if (dot == std::string::npos || dot == 1) return std::nullopt;
  std::size_t q = 0;
  for (std::size_t i = 1; i < dot; ++i) {
    if (id[i] < '0' || id[i] > '9') return std::nullopt;
    q = q * 10 + static_cast<std::size_t>(id[i] - '0');
  }
  const std::string field = id.substr(dot + 1);
  static constexpr std::array<const char*, kFieldsPerGaussian> names{
      "c", "mu.x", "mu.y", "mu.z", "sigma", "a.r", "a.g", "a.b"};
  for (std::size_t f = 0; f < names.size(); ++f)
    if (field == names[f]) return q * kFieldsPerGaussian + f;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Ray-space derivatives

/// A sample location that belongs to projected Gaussian `index`:
/// s = mubar + k_ell * sigmabar, so ds/dmubar = 1 and ds/dsigmabar = k_ell.
struct SelfSample {
  std::size_t index = 0;
  double k_ell = 0.0;
};

namespace detail {

/// d(optical depth over [0, s] of g)/d(field of g) with s held fixed.
inline double optical_depth_partial(const RayGaussian& g, double s, RayField field) {
  const double inv = kInvSqrt2 / g.sigmabar;
  const double a = -g.mubar * inv;
  const double b = (s - g.mubar) * inv;
  const double ea = std::exp(-a * a);
  const double eb = std::exp(-b * b);
  const double erf_diff = std::erf(b) - std::erf(a);
  switch (field) {
    case RayField::cbar:
      return g.sigmabar * kSqrtHalfPi * erf_diff;
    case RayField::mubar:
      return g.cbar * (ea - eb);
    case RayField::sigmabar:
      return kSqrtHalfPi * g.cbar * erf_diff - g.cbar / g.sigmabar * ((s - g.mubar) * eb + g.mubar * ea);
  }
  return 0.0;
}

inline double density_along(std::span<const RayGaussian> projected, double s) {
  double d = 0.0;
  for (const auto& g : projected) d += g.density(s);
  return d;
}

}  // namespace detail

/// dT(s)/d(param). With `self` set, s is a sample location of projected
/// Gaussian self->index and moves with its mubar and sigmabar.
inline double grad_transmittance(std::span<const RayGaussian> projected, double s, RayParamId wrt,
                                 std::optional<SelfSample> self = std::nullopt) {
  if (wrt.index >= projected.size())
    throw std::out_of_range("grad_transmittance: parameter index out of range");
  if (self && self->index >= projected.size())
    throw std::out_of_range("grad_transmittance: self index out of range");
  const double t = transmittance(projected, s);
  double dtau = detail::optical_depth_partial(projected[wrt.index], s, wrt.field);
  if (self && self->index == wrt.index && wrt.field != RayField::cbar) {
    const double ds = wrt.field == RayField::mubar ? 1.0 : self->k_ell;
    dtau += detail::density_along(projected, s) * ds;
  }
  return -t * dtau;
}

/// dV_q/d(param), product rule over lambda_q, T and G_q at the q's own samples.
inline double grad_gaussian_visibility(std::span<const RayGaussian> projected, std::size_t q,
                                       const SampleScheme& scheme, RayParamId wrt) {
  if (q >= projected.size()) throw std::out_of_range("grad_gaussian_visibility: q out of range");
  if (wrt.index >= projected.size())
    throw std::out_of_range("grad_gaussian_visibility: parameter index out of range");
  const RayGaussian& g = projected[q];
  const double ell = scheme.step;
  const double lambda = ell * g.sigmabar;
  const bool own = wrt.index == q;
  double out = 0.0;
  for (int k : scheme.offsets) {
    const double k_ell = k * ell;
    const double s = g.mubar + k_ell * g.sigmabar;
    // At its own samples G_q(s) = cbar_q exp(-(k ell)^2 / 2): independent of
    // mubar_q and sigmabar_q.
    const double shape = std::exp(-0.5 * k_ell * k_ell);
    const double gq = g.cbar * shape;
    const double t = transmittance(projected, s);
    double dlambda = 0.0, dg = 0.0;
    if (own && wrt.field == RayField::sigmabar) dlambda = ell;
    if (own && wrt.field == RayField::cbar) dg = shape;
    const double dt = grad_transmittance(projected, s, wrt, SelfSample{q, k_ell});
    out += dlambda * t * gq + lambda * dt * gq + lambda * t * dg;
  }
  return out;
}

/// Radiance derivatives on one ray: geometry[q] holds dL/d(cbar, mubar,
/// sigmabar) of projected Gaussian q as columns (rows are color channels);
/// dL_i/da_{q,i} = albedo[q] = V_q.
struct RayRadianceGrad {
  std::vector<Mat3> geometry;
  std::vector<double> albedo;
};

inline RayRadianceGrad grad_radiance(std::span<const RayGaussian> projected,
                                     std::span<const Vec3> albedos, const SampleScheme& scheme) {
  if (albedos.size() != projected.size())
    throw std::invalid_argument("grad_radiance: one albedo per projected Gaussian required");
  const std::size_t n = projected.size();
  RayRadianceGrad out;
  out.geometry.assign(n, Mat3::Zero());
  out.albedo.assign(n, 0.0);
  for (std::size_t q = 0; q < n; ++q) {
    out.albedo[q] = gaussian_visibility(projected, q, scheme);
    if (albedos[q].isZero()) continue;
    for (std::size_t p = 0; p < n; ++p) {
      for (int f = 0; f < 3; ++f) {
        const double dv =
            grad_gaussian_visibility(projected, q, scheme, RayParamId{p, static_cast<RayField>(f)});
        out.geometry[p].col(f) += albedos[q] * dv;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ray space -> world space

/// Jacobian of (cbar, mubar, sigmabar) with respect to (c, mu, sigma) of one
/// Gaussian on a given ray, applied transposed to a ray-space gradient.
/// `dc_dsigma`, when given, is the declared coupling of the magnitude to sigma.
inline GaussianGrad chain_ray_to_world(const Ray& ray, const Gaussian& g, const RayGaussian& rg,
                                       const RayParamGrad& grad,
                                       std::optional<double> dc_dsigma = std::nullopt) {
  if (g.sigma < kMinSigma) throw std::domain_error("chain_ray_to_world: sigma below 1e-9");
  const Vec3 o_minus_mu = ray.origin - g.center;
  const double s2 = rg.sigmabar * rg.sigmabar;
  // cbar / c without dividing by c, so c = 0 stays well defined.
  const double perp2 = std::max(0.0, o_minus_mu.squaredNorm() - rg.mubar * rg.mubar);
  const double falloff = std::exp(-perp2 / (2.0 * s2));

  GaussianGrad out;
  out.magnitude = grad.cbar * falloff;
  const Vec3 dcbar_dmu = rg.cbar * (o_minus_mu + rg.mubar * ray.direction) / s2;
  out.center = grad.cbar * dcbar_dmu + grad.mubar * ray.direction;
  double dcbar_dsigma = rg.cbar * perp2 / (s2 * rg.sigmabar);
  if (dc_dsigma) {
    if (g.magnitude == 0.0)
      throw std::domain_error("chain_ray_to_world: magnitude coupling needs c > 0");
    dcbar_dsigma += falloff * *dc_dsigma;
  }
  out.sigma = grad.cbar * dcbar_dsigma + grad.sigmabar;
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference verification

struct FdEntry {
  std::size_t index = 0;
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  double abs_error = 0.0;
  bool nan = false;
};

struct FdReport {
  std::vector<FdEntry> entries;
  bool has_nan = false;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.rel_error);
    return m;
  }

  /// Relative error below rel_tol, or absolute error below abs_tol where both
  /// values are smaller than small.
  bool passes(double rel_tol, double abs_tol = 1e-7, double small = 1e-6) const {
    if (has_nan) return false;
    return std::all_of(entries.begin(), entries.end(), [&](const FdEntry& e) {
      return entry_passes(e, rel_tol, abs_tol, small);
    });
  }

  static bool entry_passes(const FdEntry& e, double rel_tol, double abs_tol = 1e-7,
                           double small = 1e-6) {
    if (e.nan) return false;
    if (std::max(std::abs(e.analytic), std::abs(e.numeric)) < small) return e.abs_error < abs_tol;
    return e.rel_error < rel_tol;
  }

  /// Entry with the largest error under the pass rule's metric.
  const FdEntry* worst(double small = 1e-6) const {
    const FdEntry* w = nullptr;
    double wv = -1.0;
    for (const auto& e : entries) {
      const double v = e.nan ? std::numeric_limits<double>::infinity()
                       : std::max(std::abs(e.analytic), std::abs(e.numeric)) < small
                           ? e.abs_error * 1e3
                           : e.rel_error;
      if (v > wv) {
        wv = v;
        w = &e;
      }
    }
    return w;
  }

  std::string table() const {
    std::ostringstream os;
    os.precision(10);
    os << "param analytic numeric rel_error\n";
    for (const auto& e : entries)
      os << (e.name.empty() ? std::to_string(e.index) : e.name) << ' ' << e.analytic << ' '
         << e.numeric << ' ' << (e.nan ? std::string("nan") : std::to_string(e.rel_error)) << '\n';
    return os.str();
  }
};

struct FdOptions {
  double step = 1e-5;  ///< base step, scaled by max(1, |x_i|)
  int rungs = 3;       ///< h, h/2, h/4, ...
  std::vector<std::size_t> components;  ///< empty: all
  std::function<std::string(std::size_t)> namer;
};

/// Central differences over a step ladder; per component the rung closest to
/// the analytic value is reported.
inline FdReport fd_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> gradient, std::span<const double> point,
                         const FdOptions& opt = {}) {
  if (gradient.size() != point.size()) throw std::invalid_argument("fd_check: size mismatch");
  FdReport report;
  std::vector<double> x(point.begin(), point.end());
  std::vector<std::size_t> comps = opt.components;
  if (comps.empty()) {
    comps.resize(point.size());
    for (std::size_t i = 0; i < comps.size(); ++i) comps[i] = i;
  }
  for (std::size_t i : comps) {
    FdEntry e;
    e.index = i;
    if (opt.namer) e.name = opt.namer(i);
    e.analytic = gradient[i];
    double h = opt.step * std::max(1.0, std::abs(point[i]));
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, opt.rungs); ++r, h *= 0.5) {
      x[i] = point[i] + h;
      const double fp = f(x);
      x[i] = point[i] - h;
      const double fm = f(x);
      x[i] = point[i];
      const double num = (fp - fm) / (2.0 * h);
      if (!std::isfinite(num)) {
        e.nan = true;
        continue;
      }
      const double err = std::abs(num - e.analytic);
      if (err < best) {
        best = err;
        e.numeric = num;
      }
    }
    if (!std::isfinite(e.analytic)) e.nan = true;
    e.abs_error = std::isfinite(best) ? best : std::numeric_limits<double>::infinity();
    const double denom = std::abs(e.numeric);
    e.rel_error = denom > 0.0 ? e.abs_error / denom : (e.abs_error == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    report.has_nan = report.has_nan || e.nan;
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace gaussvis
