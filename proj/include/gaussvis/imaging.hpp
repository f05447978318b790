// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

/// @file imaging.hpp
/// Pinhole (and orthographic) camera, per-pixel rays, images and forward
/// rendering of a Gaussian scene.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "gaussvis/parallel.hpp"
#include "gaussvis/scene.hpp"
#include "gaussvis/visibility.hpp"

namespace gaussvis {

enum class Projection { perspective, orthographic };

/// Camera with world-from-camera orientation. The camera looks along its
/// local +z axis; image u runs along local +x and v along local +y.
/// For orthographic cameras fx, fy are pixels per world unit.
struct Camera {
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();
  double fx = 100.0, fy = 100.0;
  double cx = 50.0, cy = 50.0;
  int width = 100, height = 100;
  Projection projection = Projection::perspective;

  friend bool operator==(const Camera& a, const Camera& b) {
    return a.position == b.position && a.orientation == b.orientation && a.fx == b.fx &&
           a.fy == b.fy && a.cx == b.cx && a.cy == b.cy && a.width == b.width &&
           a.height == b.height && a.projection == b.projection;
  }
};

inline void validate(const Camera& c) {
  if (c.width < 1 || c.height < 1) throw std::invalid_argument("camera.width/height must be >= 1");
  if (!(c.fx != 0.0 && c.fy != 0.0)) throw std::invalid_argument("camera focal length must be nonzero");
  const Mat3 rtr = c.orientation.transpose() * c.orientation;
  if (!(rtr - Mat3::Identity()).isZero(1e-9) || std::abs(c.orientation.determinant() - 1.0) > 1e-9)
    throw std::invalid_argument("camera.rotation must be a proper rotation");
}

/// Ray through continuous image coordinates (u, v).
inline Ray generate_ray(const Camera& cam, double u, double v) {
  const double x = (u - cam.cx) / cam.fx;
  const double y = (v - cam.cy) / cam.fy;
  if (cam.projection == Projection::orthographic) {
    return Ray{cam.position + cam.orientation * Vec3(x, y, 0.0), cam.orientation.col(2)};
  }
  const Vec3 d = cam.orientation * Vec3(x, y, 1.0);
  return Ray{cam.position, d.normalized()};
}

/// Ray through the center of pixel (px, py).
inline Ray pixel_ray(const Camera& cam, int px, int py) {
  return generate_ray(cam, px + 0.5, py + 0.5);
}

/// Row-major linear RGB image with optional per-pixel weights.
struct Image {
  int width = 0, height = 0;
  std::vector<Vec3> pixels;
  std::vector<double> weights;  ///< empty: uniform weight 1

  Image() = default;
  Image(int w, int h, const Vec3& fill = Vec3::Zero())
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
    if (w < 1 || h < 1) throw std::invalid_argument("image dimensions must be >= 1");
  }

  std::size_t size() const { return pixels.size(); }
  bool has_weights() const { return !weights.empty(); }
  Vec3& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Vec3& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
};

inline void validate(const Image& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
    throw std::invalid_argument("image pixel count does not match dimensions");
  if (!img.weights.empty() && img.weights.size() != img.pixels.size())
    throw std::invalid_argument("image weight count does not match pixel count");
}

struct RenderOptions {
  SampleScheme scheme{};
  unsigned threads = 0;
};

/// Radiance from an already projected ray.
inline Vec3 shade(const Scene& scene, RayKernel& kernel, std::span<const RayGaussian> work) {
  if (work.empty()) return Vec3::Zero();
  kernel.forward(work);
  const auto vis = kernel.visibility();
  Vec3 l = Vec3::Zero();
  for (std::size_t i = 0; i < work.size(); ++i) l += scene.gaussians[work[i].source_index].albedo * vis[i];
  return l;
}

/// Radiance of one ray. `work` is scratch space.
inline Vec3 trace(const Scene& scene, const Ray& ray, RayKernel& kernel,
                  std::vector<RayGaussian>& work) {
  project_scene(scene, ray, scene.cutoff, work);
  return shade(scene, kernel, work);
}

/// Renders every pixel as the sampled radiance of its ray. Values are not
/// clamped.
inline Image render(const Scene& scene, const Camera& cam, const RenderOptions& opt = {}) {
  validate(cam);
  Image img(cam.width, cam.height);
  if (scene.empty()) return img;
  const std::vector<double> radii2 = cutoff_radii2(scene, scene.cutoff);
  parallel_for(
      static_cast<std::size_t>(cam.height),
      [&](std::size_t row) {
        RayKernel kernel(opt.scheme);
        std::vector<RayGaussian> work;
        const int y = static_cast<int>(row);
        for (int x = 0; x < cam.width; ++x) {
          project_scene(scene, pixel_ray(cam, x, y), scene.cutoff, radii2, work);
          img.at(x, y) = shade(scene, kernel, work);
        }
      },
      opt.threads);
  return img;
}

/// Camera at `position` looking at `target`, image v axis aligned with -up.
inline Camera look_at(const Vec3& position, const Vec3& target, const Vec3& up, double focal,
                      int width, int height) {
  Camera c;
  c.position = position;
  const Vec3 z = (target - position).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) x = z.unitOrthogonal();
  x.normalize();
  const Vec3 y = z.cross(x);
  c.orientation.col(0) = x;
  c.orientation.col(1) = y;
  c.orientation.col(2) = z;
  c.fx = c.fy = focal;
  c.width = width;
  c.height = height;
  c.cx = width / 2.0;
  c.cy = height / 2.0;
  return c;
}

}  // namespace gaussvis
