// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

/// @file fixtures.hpp
/// Synthetic scenes used by the experiments, the CLI and the test suites:
/// a two-sphere disocclusion sweep, a sphere+cube tracking rig, a jointed
/// arm in front of a torso, and a multi-view shape reconstruction target.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "gaussvis/calibration.hpp"
#include "gaussvis/energy.hpp"
#include "gaussvis/imaging.hpp"
#include "gaussvis/optimizer.hpp"
#include "gaussvis/parametrization.hpp"
#include "gaussvis/scene.hpp"

namespace gaussvis::fixtures {

/// Uniform double in [0,1) from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform over the ball of the given radius.
inline Vec3 uniform_ball(std::mt19937_64& rng, double radius) {
  const double z = uniform(rng, -1.0, 1.0);
  const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double r = radius * std::cbrt(uniform01(rng));
  return r * Vec3(rho * std::cos(phi), rho * std::sin(phi), z);
}

// ---------------------------------------------------------------------------
// Disocclusion sweep: a red sphere rises behind a black occluder whose upper
// silhouette grazes the central pixel ray.

struct OcclusionSweep {
  Scene scene;              ///< [0] black occluder, [1] red sphere at theta = 0
  Camera camera;            ///< odd size; the central pixel ray is the +z axis
  std::size_t red = 1;
  double red_y0 = -0.9;     ///< red center height at theta = 0
  int center_px = 0;
};

inline OcclusionSweep occlusion_sweep(double m = 0.1, const SampleScheme& scheme = {}) {
  OcclusionSweep f;
  const std::vector<SphereSpec> spheres = {
      {Vec3(0.0, -1.0, 4.0), 1.0, Vec3::Zero()},
      {Vec3(0.0, f.red_y0, 7.0), 1.0, Vec3(1.0, 0.0, 0.0)},
  };
  f.scene = build_from_spheres(spheres, m, scheme);
  f.camera = look_at(Vec3::Zero(), Vec3::UnitZ(), Vec3::UnitY(), 40.0, 33, 33);
  f.center_px = 16;
  return f;
}

/// Red sphere visibility at the central pixel with the red center raised by theta.
inline double occlusion_visibility(const OcclusionSweep& f, double theta, const SampleScheme& scheme = {}) {
  Scene s = f.scene;
  s.gaussians[f.red].center.y() = f.red_y0 + theta;
  const Ray ray = pixel_ray(f.camera, f.center_px, f.center_px);
  const auto projected = project_scene(s, ray, s.cutoff);
  for (std::size_t i = 0; i < projected.size(); ++i)
    if (projected[i].source_index == f.red) return gaussian_visibility(projected, i, scheme);
  return 0.0;
}

// ---------------------------------------------------------------------------
// Sphere + cube tracking rig. Template Gaussians sit around the origin; theta
// is [sphere translation (3), cube translation (3), cube axis-angle (3)].

struct PoseError {
  double sphere = 0.0;  ///< center distance in sphere diameters
  double cube = 0.0;    ///< mean Gaussian-center distance in edge lengths, best over cube symmetries
};

struct RigOptions {
  double smoothness = 0.1;
  int resolution = 128;
  double camera_distance = 2.5;
  double cutoff = kDefaultCutoff;
  SampleScheme scheme{};
};

struct SphereCubeRig {
  Scene templ;
  PoseParams mapping;  ///< values hold the ground truth
  Camera camera;
  Image target;
  std::vector<double> truth;
  double sphere_radius = 0.5;
  double cube_edge = 0.8;
  std::vector<Vec3> cube_local;  ///< template offsets of the 27 cube Gaussians
  /// Random initializations: each position uniform in truth +- init_box,
  /// cube orientation uniform over the axis-angle ball of radius pi.
  Vec3 init_box = Vec3(0.5, 0.5, 0.5);
  /// Overlapping, distant and occluded initializations.
  std::array<std::vector<double>, 3> manual_inits;
  RigOptions options;
};

/// The 24 proper rotations mapping the cube lattice to itself.
inline std::vector<Mat3> cube_symmetries() {
  std::vector<Mat3> out;
  const std::array<std::array<int, 3>, 6> perms = {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (const auto& p : perms)
    for (int signs = 0; signs < 8; ++signs) {
      Mat3 m = Mat3::Zero();
      for (int r = 0; r < 3; ++r) m(r, p[r]) = (signs >> r & 1) ? -1.0 : 1.0;
      if (m.determinant() > 0.0) out.push_back(m);
    }
  return out;
}

inline std::vector<double> rig_theta(const Vec3& sphere, const Vec3& cube, const Vec3& rotation) {
  return {sphere.x(), sphere.y(), sphere.z(), cube.x(), cube.y(), cube.z(), rotation.x(), rotation.y(), rotation.z()};
}

inline SphereCubeRig sphere_cube_rig(const RigOptions& opt = {}) {
  SphereCubeRig rig;
  rig.options = opt;
  const double cell = rig.cube_edge / 3.0;
  std::vector<SphereSpec> spheres = {{Vec3::Zero(), rig.sphere_radius, Vec3(1.0, 0.0, 0.0)}};
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j)
      for (int k = -1; k <= 1; ++k) {
        const Vec3 l = cell * Vec3(i, j, k);
        rig.cube_local.push_back(l);
        spheres.push_back({l, 0.5 * cell, Vec3(0.0, 0.0, 1.0)});
      }
  rig.templ = build_from_spheres(spheres, opt.smoothness, opt.scheme);
  rig.templ.cutoff = opt.cutoff;

  rig.mapping.mapping = MappingKind::rigid_multi_object;
  ObjectDescriptor sphere{ObjectKind::position, {0}, Vec3::Zero()};
  ObjectDescriptor cube{ObjectKind::rigid, {}, Vec3::Zero()};
  for (std::size_t q = 1; q <= 27; ++q) cube.gaussians.push_back(q);
  rig.mapping.objects = {sphere, cube};

  const Vec3 sphere_pos(-0.6, 0.2, 0.0), cube_pos(0.35, -0.1, 0.4), cube_rot(0.4, -0.3, 0.25);
  rig.truth = rig_theta(sphere_pos, cube_pos, cube_rot);
  rig.mapping.values = rig.truth;

  const double focal = 80.0 * opt.resolution / 128.0 * opt.camera_distance / 3.0;
  rig.camera = look_at(Vec3(0.0, 0.0, -opt.camera_distance), Vec3::Zero(), Vec3::UnitY(), focal, opt.resolution, opt.resolution);
  rig.target = render(apply_mapping(rig.mapping, rig.templ), rig.camera, {opt.scheme, 0});

  // Overlap: both objects displaced by about half their size, cube turned.
  rig.manual_inits[0] = rig_theta(sphere_pos + Vec3(0.25, -0.2, 0.2), cube_pos + Vec3(-0.2, 0.25, -0.2),
                                  cube_rot + Vec3(0.3, 0.3, -0.2));
  // Distant: neither footprint overlaps its target.
  rig.manual_inits[1] = rig_theta(sphere_pos + Vec3(0.0, 1.3, 0.3), cube_pos + Vec3(0.1, -1.1, -0.3),
                                  Vec3(-0.5, 0.6, 0.0));
  // Occluded: the cube hides behind the target sphere, just inside its
  // silhouette on the side facing the cube's target.
  const Vec3 rim = sphere_pos + Vec3(0.2, -0.1, 0.0);
  const Vec3 towards_rim = (rim - rig.camera.position).normalized();
  const Vec3 behind = rig.camera.position + towards_rim * ((rim - rig.camera.position).norm() + 1.0);
  rig.manual_inits[2] = rig_theta(sphere_pos, behind, Vec3(0.2, 0.1, -0.3));
  return rig;
}

inline std::vector<double> random_init(const SphereCubeRig& rig, std::mt19937_64& rng) {
  std::vector<double> th(9);
  for (int i = 0; i < 3; ++i) th[i] = rig.truth[i] + uniform(rng, -rig.init_box[i], rig.init_box[i]);
  for (int i = 0; i < 3; ++i) th[3 + i] = rig.truth[3 + i] + uniform(rng, -rig.init_box[i], rig.init_box[i]);
  const Vec3 w = uniform_ball(rng, std::numbers::pi);
  for (int i = 0; i < 3; ++i) th[6 + i] = w[i];
  return th;
}

inline PoseError pose_error(const SphereCubeRig& rig, std::span<const double> theta) {
  PoseError e;
  e.sphere = (Vec3(theta[0], theta[1], theta[2]) - Vec3(rig.truth[0], rig.truth[1], rig.truth[2])).norm() /
             (2.0 * rig.sphere_radius);
  const Vec3 t_est(theta[3], theta[4], theta[5]), t_true(rig.truth[3], rig.truth[4], rig.truth[5]);
  const Mat3 r_est = rotation_from_axis_angle(Vec3(theta[6], theta[7], theta[8]));
  const Mat3 r_true = rotation_from_axis_angle(Vec3(rig.truth[6], rig.truth[7], rig.truth[8]));
  double best = std::numeric_limits<double>::infinity();
  for (const Mat3& s : cube_symmetries()) {
    double sum = 0.0;
    for (const Vec3& l : rig.cube_local) sum += ((r_est * (s * l) + t_est) - (r_true * l + t_true)).norm();
    best = std::min(best, sum / static_cast<double>(rig.cube_local.size()));
  }
  e.cube = best / rig.cube_edge;
  return e;
}

/// Success: sphere within 0.1 diameters and cube within 0.1 edge lengths.
inline bool tracking_success(const PoseError& e) { return e.sphere <= 0.1 && e.cube <= 0.1; }

inline OptimConfig rig_optimizer() {
  OptimConfig c;
  c.max_iterations = 200;
  c.gradient_tolerance = 1e-7;
  c.initial_step = 0.05;
  c.max_step = 0.3;
  c.gradient_in_line_search = true;
  return c;
}

inline PoseObjective rig_objective(const SphereCubeRig& rig, DataTerm term = DataTerm::pc) {
  EnergyConfig cfg;
  cfg.term = term;
  return PoseObjective(rig.templ, rig.mapping, {View{rig.camera, rig.target}}, cfg, {rig.options.scheme, 0});
}

// ---------------------------------------------------------------------------
// Jointed arm: four spheres swinging about a shoulder beside a torso. The
// single parameter is the shoulder angle in radians (rotation about the view
// axis); the target pose is -58 degrees.

struct ArmRig {
  Scene templ;
  PoseParams mapping;
  Camera camera;
  Image target;
  double target_angle = -58.0 * std::numbers::pi / 180.0;
};

inline ArmRig arm_rig(double m, int resolution = 48, const SampleScheme& scheme = {}) {
  ArmRig rig;
  const Vec3 shoulder(0.9, 0.9, 0.0);
  std::vector<SphereSpec> spheres = {
      {Vec3(0.0, 0.9, 0.2), 0.8, Vec3(0.2, 0.5, 0.9)},
      {Vec3(0.0, -0.3, 0.2), 0.8, Vec3(0.2, 0.5, 0.9)},
  };
  // The arm hangs straight down from the shoulder in the template.
  for (int i = 0; i < 4; ++i)
    spheres.push_back({shoulder + Vec3(0.15, -0.3 - 0.4 * i, -0.4), 0.22, Vec3(0.9, 0.7, 0.5)});
  rig.templ = build_from_spheres(spheres, m, scheme);
  rig.mapping.mapping = MappingKind::rigid_multi_object;
  rig.mapping.objects = {ObjectDescriptor{ObjectKind::rigid, {2, 3, 4, 5}, shoulder}};
  rig.camera = look_at(Vec3(0.0, 0.0, -7.0), Vec3(0.3, 0.0, 0.0), Vec3::UnitY(), 14.0 * resolution / 48.0 * 2.0,
                       resolution, resolution);
  rig.mapping.values = {0, 0, 0, 0, 0, rig.target_angle};
  rig.target = render(apply_mapping(rig.mapping, rig.templ), rig.camera, {scheme, 0});
  return rig;
}

/// theta for the arm at the given shoulder angle.
inline std::vector<double> arm_theta(double angle) { return {0, 0, 0, 0, 0, angle}; }

/// Sum of absolute consecutive differences.
inline double total_variation(std::span<const double> v) {
  double tv = 0.0;
  for (std::size_t i = 1; i < v.size(); ++i) tv += std::abs(v[i] - v[i - 1]);
  return tv;
}

// ---------------------------------------------------------------------------
// Shape reconstruction target: two spheres of different colors stacked
// vertically and meeting in a short neck, seen by a ring of cameras.

struct ShapeFixture {
  std::vector<SphereSpec> spheres;
  double smoothness = 0.1;
  std::vector<Camera> cameras;  ///< last one is held out
  std::vector<Image> silhouettes;
  std::vector<Image> colors;    ///< masked RGB views (weights = silhouette)
  Vec3 box_lo, box_hi;          ///< seed volume
};

/// Binary sphere silhouettes and flat colors by exact ray-sphere tests.
inline void render_spheres(const std::vector<SphereSpec>& spheres, const Camera& cam, Image& silhouette,
                           Image& color) {
  silhouette = Image(cam.width, cam.height);
  color = Image(cam.width, cam.height);
  color.weights.assign(color.size(), 0.0);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const Ray r = pixel_ray(cam, x, y);
      double nearest = std::numeric_limits<double>::infinity();
      const SphereSpec* hit = nullptr;
      for (const auto& s : spheres) {
        const Vec3 oc = r.origin - s.center;
        const double b = oc.dot(r.direction);
        const double disc = b * b - (oc.squaredNorm() - s.radius * s.radius);
        if (disc < 0.0) continue;
        const double t = -b - std::sqrt(disc);
        if (t > 0.0 && t < nearest) {
          nearest = t;
          hit = &s;
        }
      }
      if (!hit) continue;
      silhouette.at(x, y) = Vec3::Ones();
      color.at(x, y) = hit->albedo;
      color.weights[static_cast<std::size_t>(y) * cam.width + x] = 1.0;
    }
}

inline ShapeFixture shape_fixture(int views = 8, int resolution = 32) {
  ShapeFixture f;
  f.spheres = {{Vec3(0.0, 0.55, 0.0), 0.5, Vec3(0.9, 0.2, 0.1)}, {Vec3(0.0, -0.45, 0.0), 0.6, Vec3(0.1, 0.7, 0.3)}};
  for (int v = 0; v <= views; ++v) {
    // Held-out view sits halfway between two training views.
    const double a = v < views ? 2.0 * std::numbers::pi * v / views : std::numbers::pi / views;
    const double elev = v < views ? (v % 2 ? 0.4 : -0.2) : 0.1;
    const Vec3 pos = 5.0 * Vec3(std::sin(a) * std::cos(elev), std::sin(elev), -std::cos(a) * std::cos(elev));
    f.cameras.push_back(look_at(pos, Vec3::Zero(), Vec3::UnitY(), 2.6 * resolution, resolution, resolution));
  }
  for (const auto& c : f.cameras) {
    Image s, col;
    render_spheres(f.spheres, c, s, col);
    f.silhouettes.push_back(std::move(s));
    f.colors.push_back(std::move(col));
  }
  f.box_lo = Vec3(-0.6, -1.05, -0.6);
  f.box_hi = Vec3(0.6, 1.05, 0.6);
  return f;
}

/// n white Gaussians at uniform positions in the seed volume, each calibrated
/// as a sphere of the given radius.
inline Scene shape_seeds(const ShapeFixture& f, std::size_t n, std::uint64_t seed, double radius = 0.1,
                         const SampleScheme& scheme = {}) {
  std::mt19937_64 rng(seed);
  std::vector<SphereSpec> spheres;
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = uniform(rng, f.box_lo[k], f.box_hi[k]);
    spheres.push_back({p, radius, Vec3::Ones()});
  }
  Scene s = build_from_spheres(spheres, f.smoothness, scheme);
  return s;
}

/// Intersection over union of radiance-thresholded silhouettes.
inline double silhouette_iou(const Image& a, const Image& b, double threshold = 0.5) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool ia = a.pixels[i].maxCoeff() > threshold, ib = b.pixels[i].maxCoeff() > threshold;
    inter += ia && ib;
    uni += ia || ib;
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

}  // namespace gaussvis::fixtures
