// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

/// @file scene.hpp
/// Gaussian density scene: isotropic 3D Gaussians, rays, and the projection
/// of a 3D Gaussian onto a ray as a scaled 1D Gaussian.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gaussvis {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Default exclusion threshold for projected magnitudes.
inline constexpr double kDefaultCutoff = 1e-5;

/// Smallest standard deviation accepted anywhere in the math path.
inline constexpr double kMinSigma = 1e-9;

/// One scaled isotropic Gaussian of the density field, with its albedo.
struct Gaussian {
  double magnitude = 1.0;
  Vec3 center = Vec3::Zero();
  double sigma = 1.0;
  Vec3 albedo = Vec3::Ones();

  double density(const Vec3& x) const {
    return magnitude * std::exp(-(x - center).squaredNorm() / (2.0 * sigma * sigma));
  }

  friend bool operator==(const Gaussian&, const Gaussian&) = default;
};

/// Throws std::invalid_argument naming the offending field.
inline void validate(const Gaussian& g) {
  if (!(g.sigma > 0.0) || !std::isfinite(g.sigma))
    throw std::invalid_argument("gaussian.sigma must be positive, got " + std::to_string(g.sigma));
  if (!(g.magnitude >= 0.0) || !std::isfinite(g.magnitude))
    throw std::invalid_argument("gaussian.magnitude must be nonnegative, got " +
                                std::to_string(g.magnitude));
  if (!g.center.allFinite()) throw std::invalid_argument("gaussian.center must be finite");
  for (int i = 0; i < 3; ++i) {
    if (!(g.albedo[i] >= 0.0 && g.albedo[i] <= 1.0))
      throw std::invalid_argument("gaussian.albedo channel outside [0,1]");
  }
}

/// Ordered collection of Gaussians. Ordering only fixes indices; it never
/// changes what is visible.
struct Scene {
  std::vector<Gaussian> gaussians;
  double smoothness = 0.1;  ///< calibration level m the Gaussians were built with
  double cutoff = kDefaultCutoff;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }

  friend bool operator==(const Scene&, const Scene&) = default;
};

inline void validate(const Scene& s) {
  for (const auto& g : s.gaussians) validate(g);
  if (!(s.cutoff >= 0.0)) throw std::invalid_argument("scene.cutoff must be nonnegative");
}

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  ///< unit length

  Vec3 at(double s) const { return origin + s * direction; }
};

/// Builds a ray, normalizing the direction.
inline Ray make_ray(const Vec3& origin, const Vec3& direction) {
  const double len = direction.norm();
  if (!(len > 0.0)) throw std::domain_error("ray direction has zero length");
  return Ray{origin, direction / len};
}

/// A 3D Gaussian restricted to a ray: cbar * exp(-(s - mubar)^2 / (2 sigmabar^2)).
struct RayGaussian {
  double cbar = 0.0;
  double mubar = 0.0;
  double sigmabar = 1.0;
  std::size_t source_index = 0;

  double density(double s) const {
    const double t = (s - mubar) / sigmabar;
    return cbar * std::exp(-0.5 * t * t);
  }
};

inline RayGaussian project_to_ray(const Gaussian& g, const Ray& r, std::size_t index = 0) {
  const Vec3 rel = g.center - r.origin;
  const double mubar = rel.dot(r.direction);
  // Squared distance from the center to the ray line; clamp tiny negative
  // rounding so cbar never exceeds the magnitude.
  const double perp2 = std::max(0.0, rel.squaredNorm() - mubar * mubar);
  const double cbar = g.magnitude * std::exp(-perp2 / (2.0 * g.sigma * g.sigma));
  return RayGaussian{cbar, mubar, g.sigma, index};
}

/// Per-Gaussian squared ray distance beyond which cbar < cutoff, slightly
/// enlarged so that skipping on it never drops a Gaussian the exact test keeps.
inline std::vector<double> cutoff_radii2(const Scene& scene, double cutoff) {
  std::vector<double> r2(scene.size());
  for (std::size_t q = 0; q < scene.size(); ++q) {
    const auto& g = scene.gaussians[q];
    if (!(cutoff > 0.0)) {
      r2[q] = std::numeric_limits<double>::infinity();
    } else if (!(g.magnitude >= cutoff)) {
      r2[q] = -1.0;
    } else {
      r2[q] = 2.0 * g.sigma * g.sigma * std::log(g.magnitude / cutoff) * (1.0 + 1e-9) + 1e-300;
    }
  }
  return r2;
}

/// Projects every Gaussian of the scene onto the ray, keeping those with
/// cbar >= cutoff. Order and source indices are preserved. `radii2` from
/// cutoff_radii2() lets distant Gaussians be skipped before any exp().
inline void project_scene(const Scene& scene, const Ray& r, double cutoff, std::span<const double> radii2,
                          std::vector<RayGaussian>& out) {
  out.clear();
  for (std::size_t q = 0; q < scene.gaussians.size(); ++q) {
    const Gaussian& g = scene.gaussians[q];
    const Vec3 rel = g.center - r.origin;
    const double mubar = rel.dot(r.direction);
    const double perp2 = std::max(0.0, rel.squaredNorm() - mubar * mubar);
    if (perp2 > radii2[q]) continue;
    const double cbar = g.magnitude * std::exp(-perp2 / (2.0 * g.sigma * g.sigma));
    if (cbar >= cutoff) out.push_back(RayGaussian{cbar, mubar, g.sigma, q});
  }
}

inline void project_scene(const Scene& scene, const Ray& r, double cutoff,
                          std::vector<RayGaussian>& out) {
  out.clear();
  for (std::size_t q = 0; q < scene.gaussians.size(); ++q) {
    RayGaussian rg = project_to_ray(scene.gaussians[q], r, q);
    if (rg.cbar >= cutoff) out.push_back(rg);
  }
}

inline std::vector<RayGaussian> project_scene(const Scene& scene, const Ray& r, double cutoff) {
  std::vector<RayGaussian> out;
  project_scene(scene, r, cutoff, out);
  return out;
}

/// D(x) = sum_q G_q(x).
inline double density_at(const Scene& scene, const Vec3& x) {
  double d = 0.0;
  for (const auto& g : scene.gaussians) d += g.density(x);
  return d;
}

}  // namespace gaussvis
