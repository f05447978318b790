// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

/// @file visibility.hpp
/// Light transport through the Gaussian absorption medium: closed-form
/// transmittance, point visibility, sampled per-Gaussian visibility and
/// radiance.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "gaussvis/scene.hpp"

namespace gaussvis {

/// sqrt(pi/2); the constant relating sigmabar * cbar to the optical depth of a
/// 1D Gaussian integrated with erf.
inline constexpr double kSqrtHalfPi = 1.2533141373155002512;
inline constexpr double kInvSqrt2 = 0.70710678118654752440;

/// Beyond this |argument| erf is +-1 and exp(-x^2) is below 1e-18 in double
/// precision, so both are taken as exact limits.
inline constexpr double kErfSaturation = 6.5;

/// Sample offsets k and step factor ell: samples of Gaussian q sit at
/// mubar_q + k * ell * sigmabar_q and are weighted by lambda_q = ell * sigmabar_q.
struct SampleScheme {
  std::vector<int> offsets{-4, -3, -2, -1, 0};
  double step = 1.0;

  std::size_t count() const { return offsets.size(); }

  friend bool operator==(const SampleScheme&, const SampleScheme&) = default;
};

inline void validate(const SampleScheme& s) {
  if (s.offsets.empty()) throw std::invalid_argument("samples.offsets must be nonempty");
  if (!(s.step > 0.0)) throw std::invalid_argument("samples.step must be positive");
}

/// Optical depth of one ray Gaussian over [0, s].
inline double optical_depth(const RayGaussian& g, double s) {
  const double scale = kInvSqrt2 / g.sigmabar;
  return g.cbar * g.sigmabar * kSqrtHalfPi *
         (std::erf((s - g.mubar) * scale) - std::erf(-g.mubar * scale));
}

/// Optical depth of all projected Gaussians over [0, s], accumulated in one
/// pass before exponentiation.
inline double optical_depth(std::span<const RayGaussian> projected, double s) {
  double tau = 0.0;
  for (const auto& g : projected) tau += optical_depth(g, s);
  return tau;
}

/// T(s) = exp(-integral_0^s D(o + t n) dt).
inline double transmittance(std::span<const RayGaussian> projected, double s) {
  return std::exp(-optical_depth(projected, s));
}

/// Drops projected Gaussians with cbar below the cutoff; order is kept.
inline std::vector<RayGaussian> apply_cutoff(std::span<const RayGaussian> projected, double cutoff) {
  std::vector<RayGaussian> out;
  out.reserve(projected.size());
  for (const auto& g : projected)
    if (g.cbar >= cutoff) out.push_back(g);
  return out;
}

/// Fractional visibility of point x seen from o.
inline double point_visibility(const Scene& scene, const Vec3& x, const Vec3& o) {
  const Vec3 d = x - o;
  const double dist = d.norm();
  if (!(dist > 0.0)) throw std::domain_error("point_visibility: point coincides with the eye");
  const Ray ray{o, d / dist};
  const auto projected = project_scene(scene, ray, scene.cutoff);
  return transmittance(projected, dist);
}

/// Sample location of Gaussian g for offset k.
inline double sample_location(const RayGaussian& g, int k, const SampleScheme& scheme) {
  return g.mubar + k * scheme.step * g.sigmabar;
}

/// V_q = sum_{s in S_q} lambda_q T(s) G_q(s). `q` indexes into `projected`.
inline double gaussian_visibility(std::span<const RayGaussian> projected, std::size_t q,
                                  const SampleScheme& scheme) {
  if (q >= projected.size()) throw std::out_of_range("gaussian_visibility: index out of range");
  const RayGaussian& g = projected[q];
  if (g.cbar == 0.0) return 0.0;
  const double lambda = scheme.step * g.sigmabar;
  double v = 0.0;
  for (int k : scheme.offsets) {
    const double s = sample_location(g, k, scheme);
    v += lambda * transmittance(projected, s) * g.density(s);
  }
  return v;
}

/// L = sum_q a_q V_q. `albedos` runs parallel to `projected`.
inline Vec3 radiance(std::span<const RayGaussian> projected, std::span<const Vec3> albedos,
                     const SampleScheme& scheme) {
  if (albedos.size() != projected.size())
    throw std::invalid_argument("radiance: one albedo per projected Gaussian required");
  Vec3 l = Vec3::Zero();
  for (std::size_t q = 0; q < projected.size(); ++q)
    l += albedos[q] * gaussian_visibility(projected, q, scheme);
  return l;
}

/// Ray-space adjoint of one projected Gaussian.
struct RayParamGrad {
  double cbar = 0.0;
  double mubar = 0.0;
  double sigmabar = 0.0;
};

/// Evaluates all Gaussian visibilities of one ray at once and, optionally,
/// back-propagates weights on them to the ray-space parameters.
///
/// Cost is O(N^2 |K|) for N projected Gaussians. The per-(Gaussian, sample)
/// erf and exp(-x^2) values are cached by forward() when `keep_for_backward`
/// is set, so backward() adds no transcendental evaluations.
class RayKernel {
 public:
  explicit RayKernel(SampleScheme scheme) : scheme_(std::move(scheme)) {
    validate(scheme_);
    weights_.reserve(scheme_.count());
    for (int k : scheme_.offsets) {
      const double t = k * scheme_.step;
      weights_.push_back(std::exp(-0.5 * t * t));
    }
  }

  const SampleScheme& scheme() const { return scheme_; }

  void forward(std::span<const RayGaussian> projected, bool keep_for_backward = false) {
    projected_ = projected;
    const std::size_t n = projected.size();
    const std::size_t nk = scheme_.count();
    const std::size_t ns = n * nk;
    visibility_.assign(n, 0.0);
    trans_.resize(ns);
    loc_.resize(ns);
    erf_a_.resize(n);
    exp_a_.resize(n);
    inv_scale_.resize(n);
    if (keep_for_backward) {
      erf_b_.resize(ns * n);
      exp_b_.resize(ns * n);
    }
    kept_ = keep_for_backward;

    double tau0 = 0.0;  // sum_p A_p-constant part, reused by every sample
    mubar_.resize(n);
    weight_.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      const auto& g = projected[p];
      inv_scale_[p] = kInvSqrt2 / g.sigmabar;
      mubar_[p] = g.mubar;
      weight_[p] = g.cbar * g.sigmabar * kSqrtHalfPi;
      const double a = -g.mubar * inv_scale_[p];
      if (std::abs(a) > kErfSaturation) {
        erf_a_[p] = a > 0 ? 1.0 : -1.0;
        exp_a_[p] = 0.0;
      } else {
        erf_a_[p] = std::erf(a);
        exp_a_[p] = std::exp(-a * a);
      }
      tau0 += weight_[p] * erf_a_[p];
    }

    for (std::size_t q = 0; q < n; ++q) {
      const auto& gq = projected[q];
      double acc = 0.0;
      for (std::size_t k = 0; k < nk; ++k) {
        const std::size_t j = q * nk + k;
        const double s = sample_location(gq, scheme_.offsets[k], scheme_);
        loc_[j] = s;
        double tau = -tau0;
        if (keep_for_backward) {
          double* eb = &erf_b_[j * n];
          double* xb = &exp_b_[j * n];
          for (std::size_t p = 0; p < n; ++p) {
            const double b = (s - mubar_[p]) * inv_scale_[p];
            if (std::abs(b) > kErfSaturation) {
              eb[p] = b > 0 ? 1.0 : -1.0;
              xb[p] = 0.0;
            } else {
              eb[p] = std::erf(b);
              xb[p] = std::exp(-b * b);
            }
            tau += weight_[p] * eb[p];
          }
        } else {
          for (std::size_t p = 0; p < n; ++p) {
            const double b = (s - mubar_[p]) * inv_scale_[p];
            const double e = std::abs(b) > kErfSaturation ? (b > 0 ? 1.0 : -1.0) : std::erf(b);
            tau += weight_[p] * e;
          }
        }
        trans_[j] = std::exp(-tau);
        acc += weights_[k] * trans_[j];
      }
      visibility_[q] = scheme_.step * gq.sigmabar * gq.cbar * acc;
    }
  }

  std::span<const double> visibility() const { return visibility_; }

  /// Transmittance at sample k of Gaussian q from the last forward().
  double sample_transmittance(std::size_t q, std::size_t k) const {
    return trans_[q * scheme_.count() + k];
  }

  /// Accumulates d(sum_q beta_q V_q)/d(ray params) into `out` (one entry per
  /// projected Gaussian). Requires forward(..., true).
  void backward(std::span<const double> beta, std::span<RayParamGrad> out) const {
    if (!kept_) throw std::logic_error("RayKernel::backward needs forward(..., true)");
    const std::size_t n = projected_.size();
    const std::size_t nk = scheme_.count();
    const double ell = scheme_.step;

    // Per-Gaussian accumulators over all samples j of
    //   omega_j * erf(b_pj), omega_j * exp(-b_pj^2), omega_j * (s_j - mubar_p) * exp(-b_pj^2).
    acc_erf_.assign(n, 0.0);
    acc_exp_.assign(n, 0.0);
    acc_lin_.assign(n, 0.0);
    double omega_total = 0.0;

    for (std::size_t q = 0; q < n; ++q) {
      const auto& gq = projected_[q];
      if (beta[q] == 0.0) continue;
      const double scale = beta[q] * ell * gq.sigmabar * gq.cbar;
      double direct = 0.0;
      for (std::size_t k = 0; k < nk; ++k) {
        const std::size_t j = q * nk + k;
        direct += weights_[k] * trans_[j];
        const double omega = scale * weights_[k] * trans_[j];
        if (omega == 0.0) continue;
        omega_total += omega;
        const double s = loc_[j];
        double dens = 0.0;  // D(s_j)
        const double* eb = &erf_b_[j * n];
        const double* xb = &exp_b_[j * n];
        for (std::size_t p = 0; p < n; ++p) {
          const double ox = omega * xb[p];
          acc_erf_[p] += omega * eb[p];
          acc_exp_[p] += ox;
          acc_lin_[p] += ox * (s - projected_[p].mubar);
          dens += projected_[p].cbar * xb[p];
        }
        // The sample location moves with mubar_q (ds = 1) and sigmabar_q (ds = k ell).
        out[q].mubar -= omega * dens;
        out[q].sigmabar -= omega * dens * scheme_.offsets[k] * ell;
      }
      out[q].cbar += beta[q] * ell * gq.sigmabar * direct;
      out[q].sigmabar += beta[q] * ell * gq.cbar * direct;
    }

    for (std::size_t p = 0; p < n; ++p) {
      const auto& g = projected_[p];
      const double erf_diff = acc_erf_[p] - omega_total * erf_a_[p];
      out[p].cbar -= g.sigmabar * kSqrtHalfPi * erf_diff;
      out[p].mubar -= g.cbar * (omega_total * exp_a_[p] - acc_exp_[p]);
      out[p].sigmabar -= kSqrtHalfPi * g.cbar * erf_diff -
                         g.cbar / g.sigmabar * (acc_lin_[p] + omega_total * g.mubar * exp_a_[p]);
    }
  }

 private:
  SampleScheme scheme_;
  std::vector<double> weights_;
  std::span<const RayGaussian> projected_;
  std::vector<double> visibility_, trans_, loc_, erf_a_, exp_a_, inv_scale_, mubar_, weight_, erf_b_, exp_b_;
  mutable std::vector<double> acc_erf_, acc_exp_, acc_lin_;
  bool kept_ = false;
};

}  // namespace gaussvis
