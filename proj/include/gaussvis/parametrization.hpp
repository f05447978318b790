// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

/// @file parametrization.hpp
/// Maps a configuration vector theta to scene parameters gamma(theta) and
/// provides the sparse Jacobian d gamma / d theta.
///
/// Slice layout of theta, object by object:
///   rigid object     [tx ty tz wx wy wz]   (translation, axis-angle rotation)
///   position object  [tx ty tz]
///   free Gaussian    [mx my mz log(sigma)] (one slice per Gaussian)

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaussvis/gradients.hpp"
#include "gaussvis/scene.hpp"

namespace gaussvis {

/// [w] such that [w] v = w x v.
inline Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

/// Rodrigues' formula; below 1e-6 rad the second-order series is used.
inline Mat3 rotation_from_axis_angle(const Vec3& w) {
  const double angle = w.norm();
  const Mat3 k = skew(w);
  if (angle < 1e-6) return Mat3::Identity() + k + 0.5 * k * k;
  const double a = std::sin(angle) / angle;
  const double b = (1.0 - std::cos(angle)) / (angle * angle);
  return Mat3::Identity() + a * k + b * k * k;
}

/// dR/dw_i for i = 0..2.
inline std::array<Mat3, 3> rotation_derivatives(const Vec3& w) {
  std::array<Mat3, 3> d;
  const double angle2 = w.squaredNorm();
  if (angle2 < 1e-12) {
    const Mat3 k = skew(w);
    for (int i = 0; i < 3; ++i) {
      const Mat3 e = skew(Vec3::Unit(i));
      d[i] = e + 0.5 * (e * k + k * e);
    }
    return d;
  }
  const Mat3 r = rotation_from_axis_angle(w);
  const Mat3 i_minus_r = Mat3::Identity() - r;
  for (int i = 0; i < 3; ++i) {
    const Vec3 e = Vec3::Unit(i);
    d[i] = (w[i] * skew(w) + skew(w.cross(i_minus_r * e))) / angle2 * r;
  }
  return d;
}

/// Axis-angle vector of a rotation matrix.
inline Vec3 axis_angle_from_rotation(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

enum class MappingKind { rigid_multi_object, free_gaussian };
enum class ObjectKind { rigid, position };

inline std::size_t arity(ObjectKind k) { return k == ObjectKind::rigid ? 6 : 3; }
inline constexpr std::size_t kFreeGaussianArity = 4;

struct ObjectDescriptor {
  ObjectKind kind = ObjectKind::rigid;
  std::vector<std::size_t> gaussians;  ///< template indices moved by this object
  Vec3 pivot = Vec3::Zero();           ///< rotation center in template coordinates

  friend bool operator==(const ObjectDescriptor&, const ObjectDescriptor&) = default;
};

struct PoseParams {
  MappingKind mapping = MappingKind::rigid_multi_object;
  std::vector<ObjectDescriptor> objects;  ///< rigid mapping only
  std::vector<double> values;             ///< theta
  /// Free mapping: keep c * sigma at its template value (magnitude re-derived
  /// from the calibration constraint) instead of copying c.
  bool couple_magnitude = false;

  friend bool operator==(const PoseParams&, const PoseParams&) = default;
};

/// Number of theta entries the mapping needs for a template of n Gaussians.
inline std::size_t parameter_count(const PoseParams& p, std::size_t n_gaussians) {
  if (p.mapping == MappingKind::free_gaussian) return kFreeGaussianArity * n_gaussians;
  std::size_t n = 0;
  for (const auto& o : p.objects) n += arity(o.kind);
  return n;
}

inline void validate(const PoseParams& p, const Scene& templ) {
  if (p.values.size() != parameter_count(p, templ.size()))
    throw std::invalid_argument("mapping: theta has " + std::to_string(p.values.size()) +
                                " entries, expected " +
                                std::to_string(parameter_count(p, templ.size())));
  for (const auto& o : p.objects)
    for (std::size_t q : o.gaussians)
      if (q >= templ.size()) throw std::invalid_argument("mapping: object references Gaussian " +
                                                         std::to_string(q) + " out of range");
}

/// theta reproducing the template exactly (identity transforms / template
/// positions and sizes).
inline std::vector<double> identity_theta(const PoseParams& p, const Scene& templ) {
  std::vector<double> th(parameter_count(p, templ.size()), 0.0);
  if (p.mapping == MappingKind::free_gaussian) {
    for (std::size_t q = 0; q < templ.size(); ++q) {
      const auto& g = templ.gaussians[q];
      th[4 * q + 0] = g.center.x();
      th[4 * q + 1] = g.center.y();
      th[4 * q + 2] = g.center.z();
      th[4 * q + 3] = std::log(g.sigma);
    }
  }
  return th;
}

inline Scene apply_mapping(const PoseParams& p, const Scene& templ) {
  validate(p, templ);
  Scene out = templ;
  const auto& th = p.values;
  if (p.mapping == MappingKind::free_gaussian) {
    for (std::size_t q = 0; q < templ.size(); ++q) {
      auto& g = out.gaussians[q];
      g.center = Vec3(th[4 * q], th[4 * q + 1], th[4 * q + 2]);
      g.sigma = std::exp(th[4 * q + 3]);
      if (!(g.sigma > 0.0) || !std::isfinite(g.sigma))
        throw std::domain_error("mapping: sigma of Gaussian " + std::to_string(q) +
                                " is not a positive finite number");
      if (p.couple_magnitude)
        g.magnitude = templ.gaussians[q].magnitude * templ.gaussians[q].sigma / g.sigma;
    }
    return out;
  }
  std::size_t offset = 0;
  for (const auto& o : p.objects) {
    const Vec3 t(th[offset], th[offset + 1], th[offset + 2]);
    if (o.kind == ObjectKind::rigid) {
      const Mat3 r = rotation_from_axis_angle(Vec3(th[offset + 3], th[offset + 4], th[offset + 5]));
      for (std::size_t q : o.gaussians)
        out.gaussians[q].center = o.pivot + t + r * (templ.gaussians[q].center - o.pivot);
    } else {
      for (std::size_t q : o.gaussians) out.gaussians[q].center = templ.gaussians[q].center + t;
    }
    offset += arity(o.kind);
  }
  return out;
}

/// Sparse d gamma / d theta with gamma laid out as scene_parameters().
struct MappingJacobian {
  struct Entry {
    std::size_t row;  ///< gamma index
    std::size_t col;  ///< theta index
    double value;
  };
  std::size_t rows = 0, cols = 0;
  std::vector<Entry> entries;

  /// J^T g.
  std::vector<double> apply_transpose(std::span<const double> grad_gamma) const {
    if (grad_gamma.size() != rows) throw std::invalid_argument("jacobian: gradient length mismatch");
    std::vector<double> out(cols, 0.0);
    for (const auto& e : entries) out[e.col] += e.value * grad_gamma[e.row];
    return out;
  }

  double at(std::size_t row, std::size_t col) const {
    double v = 0.0;
    for (const auto& e : entries)
      if (e.row == row && e.col == col) v += e.value;
    return v;
  }
};

inline MappingJacobian mapping_jacobian(const PoseParams& p, const Scene& templ) {
  validate(p, templ);
  MappingJacobian j;
  j.rows = templ.size() * kFieldsPerGaussian;
  j.cols = p.values.size();
  const auto& th = p.values;
  auto row = [](std::size_t q, SceneField f) { return q * kFieldsPerGaussian + static_cast<std::size_t>(f); };

  if (p.mapping == MappingKind::free_gaussian) {
    for (std::size_t q = 0; q < templ.size(); ++q) {
      for (int a = 0; a < 3; ++a)
        j.entries.push_back({row(q, static_cast<SceneField>(1 + a)), 4 * q + a, 1.0});
      const double sigma = std::exp(th[4 * q + 3]);
      j.entries.push_back({row(q, SceneField::sigma), 4 * q + 3, sigma});
      if (p.couple_magnitude) {
        // c = c0 sigma0 / sigma  =>  dc/dlog(sigma) = -c.
        const double c = templ.gaussians[q].magnitude * templ.gaussians[q].sigma / sigma;
        j.entries.push_back({row(q, SceneField::magnitude), 4 * q + 3, -c});
      }
    }
    return j;
  }

  std::size_t offset = 0;
  for (const auto& o : p.objects) {
    std::array<Mat3, 3> dr{};
    if (o.kind == ObjectKind::rigid)
      dr = rotation_derivatives(Vec3(th[offset + 3], th[offset + 4], th[offset + 5]));
    for (std::size_t q : o.gaussians) {
      for (int a = 0; a < 3; ++a)
        j.entries.push_back({row(q, static_cast<SceneField>(1 + a)), offset + a, 1.0});
      if (o.kind != ObjectKind::rigid) continue;
      const Vec3 local = templ.gaussians[q].center - o.pivot;
      for (int i = 0; i < 3; ++i) {
        const Vec3 d = dr[i] * local;
        for (int a = 0; a < 3; ++a)
          if (d[a] != 0.0) j.entries.push_back({row(q, static_cast<SceneField>(1 + a)), offset + 3 + i, d[a]});
      }
    }
    offset += arity(o.kind);
  }
  return j;
}

}  // namespace gaussvis
