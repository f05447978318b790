// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

/// @file energy.hpp
/// Data terms comparing a Gaussian scene to images (photo-consistency D_pc and
/// the visibility-weighted color term D_mc), color dissimilarity, quadratic
/// priors, albedo back-projection, and the pose objective F(theta).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gaussvis/gradients.hpp"
#include "gaussvis/imaging.hpp"
#include "gaussvis/parallel.hpp"
#include "gaussvis/parametrization.hpp"
#include "gaussvis/scene.hpp"
#include "gaussvis/visibility.hpp"

namespace gaussvis {

enum class DataTerm { pc, mc };
enum class ColorSpace { linear_rgb, hsv_scaled };
enum class PixelWeighting { uniform, per_pixel };

struct ParamLimit {
  double lo = -1e300;
  double hi = 1e300;
  friend bool operator==(const ParamLimit&, const ParamLimit&) = default;
};

struct EnergyConfig {
  DataTerm term = DataTerm::pc;
  ColorSpace color_space = ColorSpace::linear_rgb;
  double hsv_value_scale = 0.2;
  PixelWeighting weighting = PixelWeighting::uniform;
  double accel_weight = 0.0;
  double limit_weight = 0.0;
  std::vector<ParamLimit> limits;  ///< per theta component; empty: unlimited
  /// Skip pixels whose ray passes farther than exclusion_radius * sigma from
  /// every Gaussian center. Unset: on for D_mc, off for D_pc.
  std::optional<bool> exclude_far_pixels;
  double exclusion_radius = 4.0;

  bool excludes_far_pixels() const { return exclude_far_pixels.value_or(term == DataTerm::mc); }

  friend bool operator==(const EnergyConfig&, const EnergyConfig&) = default;
};

inline void validate(const EnergyConfig& c) {
  if (!(c.accel_weight >= 0.0) || !(c.limit_weight >= 0.0))
    throw std::invalid_argument("energy: prior weights must be nonnegative");
  for (const auto& l : c.limits)
    if (!(l.lo <= l.hi)) throw std::invalid_argument("energy: limit lo exceeds hi");
}

// ---------------------------------------------------------------------------
// Colors

/// Hexcone HSV with h in [0,1).
inline Vec3 rgb_to_hsv(const Vec3& rgb) {
  const double mx = rgb.maxCoeff();
  const double mn = rgb.minCoeff();
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 0.0) {
    if (mx == rgb[0]) h = (rgb[1] - rgb[2]) / delta;
    else if (mx == rgb[1]) h = (rgb[2] - rgb[0]) / delta + 2.0;
    else h = (rgb[0] - rgb[1]) / delta + 4.0;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
    if (h >= 1.0) h -= 1.0;
  }
  const double s = mx > 0.0 ? delta / mx : 0.0;
  return Vec3(h, s, mx);
}

/// Rows: d(h, s, v)/d(r, g, b) of rgb_to_hsv, one-sided at ties.
inline Mat3 rgb_to_hsv_jacobian(const Vec3& rgb) {
  Mat3 j = Mat3::Zero();
  int imax = 0, imin = 0;
  rgb.maxCoeff(&imax);
  rgb.minCoeff(&imin);
  // Same branch selection as rgb_to_hsv.
  const double mx = rgb.maxCoeff();
  imax = mx == rgb[0] ? 0 : (mx == rgb[1] ? 1 : 2);
  const double delta = rgb[imax] - rgb[imin];
  const Vec3 e_max = Vec3::Unit(imax);
  const Vec3 e_min = Vec3::Unit(imin);
  const Vec3 d_delta = e_max - e_min;
  if (delta > 0.0) {
    Vec3 d_num;
    double num;
    if (imax == 0) { num = rgb[1] - rgb[2]; d_num = Vec3(0, 1, -1); }
    else if (imax == 1) { num = rgb[2] - rgb[0]; d_num = Vec3(-1, 0, 1); }
    else { num = rgb[0] - rgb[1]; d_num = Vec3(1, -1, 0); }
    j.row(0) = ((d_num * delta - num * d_delta) / (6.0 * delta * delta)).transpose();
  }
  if (rgb[imax] > 0.0)
    j.row(1) = ((d_delta * rgb[imax] - delta * e_max) / (rgb[imax] * rgb[imax])).transpose();
  j.row(2) = e_max.transpose();
  return j;
}

/// Hue difference a - b wrapped to [-0.5, 0.5].
inline double wrapped_hue_difference(double a, double b) {
  double d = a - b;
  d -= std::round(d);
  return d;
}

/// Squared Euclidean distance in the configured color space; hue wraps.
inline double color_dissimilarity(const Vec3& pixel, const Vec3& albedo, const EnergyConfig& cfg) {
  if (cfg.color_space == ColorSpace::linear_rgb) return (pixel - albedo).squaredNorm();
  const Vec3 p = rgb_to_hsv(pixel);
  const Vec3 a = rgb_to_hsv(albedo);
  const double dh = wrapped_hue_difference(a[0], p[0]);
  const double ds = a[1] - p[1];
  const double dv = cfg.hsv_value_scale * (a[2] - p[2]);
  return dh * dh + ds * ds + dv * dv;
}

/// d color_dissimilarity(pixel, albedo) / d albedo.
inline Vec3 color_dissimilarity_grad(const Vec3& pixel, const Vec3& albedo, const EnergyConfig& cfg) {
  if (cfg.color_space == ColorSpace::linear_rgb) return 2.0 * (albedo - pixel);
  const Vec3 p = rgb_to_hsv(pixel);
  const Vec3 a = rgb_to_hsv(albedo);
  const double k2 = cfg.hsv_value_scale * cfg.hsv_value_scale;
  const Vec3 d_hsv(2.0 * wrapped_hue_difference(a[0], p[0]), 2.0 * (a[1] - p[1]),
                   2.0 * k2 * (a[2] - p[2]));
  return rgb_to_hsv_jacobian(albedo).transpose() * d_hsv;
}

// ---------------------------------------------------------------------------
// Data terms

/// One calibrated camera with its observed image.
struct View {
  Camera camera;
  Image image;
};

struct EvalOptions {
  SampleScheme scheme{};
  unsigned threads = 0;
};

struct DataTermResult {
  double value = 0.0;
  GradVector gradient;  ///< filled only when requested
};

namespace detail {

inline bool pixel_excluded(const Scene& scene, const Ray& ray, double radius) {
  for (const auto& g : scene.gaussians) {
    const Vec3 rel = g.center - ray.origin;
    const double along = rel.dot(ray.direction);
    const double perp2 = rel.squaredNorm() - along * along;
    const double lim = radius * g.sigma;
    if (perp2 <= lim * lim) return false;
  }
  return true;
}

struct RowWork {
  std::span<const double> radii2;
  RayKernel kernel;
  std::vector<RayGaussian> projected;
  std::vector<double> beta;
  std::vector<RayParamGrad> ray_grad;
  RowWork(const SampleScheme& s, std::span<const double> r2) : radii2(r2), kernel(s) {}
};

/// Energy of one pixel; accumulates its scene gradient into `grad` when given.
inline double pixel_term(const Scene& scene, const Ray& ray, const Vec3& observed, double weight,
                         const EnergyConfig& cfg, RowWork& w, GradVector* grad) {
  if (weight == 0.0) return 0.0;
  if (cfg.excludes_far_pixels() && pixel_excluded(scene, ray, cfg.exclusion_radius)) return 0.0;
  project_scene(scene, ray, scene.cutoff, w.radii2, w.projected);
  const std::size_t n = w.projected.size();
  if (n == 0) return cfg.term == DataTerm::pc ? weight * observed.squaredNorm() : 0.0;

  w.kernel.forward(w.projected, grad != nullptr);
  const auto vis = w.kernel.visibility();
  w.beta.assign(n, 0.0);
  double value = 0.0;
  Vec3 residual = Vec3::Zero();

  if (cfg.term == DataTerm::pc) {
    Vec3 l = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) l += scene.gaussians[w.projected[i].source_index].albedo * vis[i];
    residual = l - observed;
    value = weight * residual.squaredNorm();
    for (std::size_t i = 0; i < n; ++i)
      w.beta[i] = 2.0 * weight * residual.dot(scene.gaussians[w.projected[i].source_index].albedo);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double d = color_dissimilarity(observed, scene.gaussians[w.projected[i].source_index].albedo, cfg);
      w.beta[i] = weight * d;
      value += w.beta[i] * vis[i];
    }
  }
  if (grad == nullptr) return value;

  w.ray_grad.assign(n, RayParamGrad{});
  w.kernel.backward(w.beta, w.ray_grad);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t q = w.projected[i].source_index;
    const Gaussian& g = scene.gaussians[q];
    GaussianGrad gg = chain_ray_to_world(ray, g, w.projected[i], w.ray_grad[i]);
    if (cfg.term == DataTerm::pc) {
      gg.albedo = 2.0 * weight * residual * vis[i];
    } else {
      gg.albedo = weight * vis[i] * color_dissimilarity_grad(observed, g.albedo, cfg);
    }
    grad->blocks[q] += gg;
  }
  return value;
}

}  // namespace detail

/// Sum over views of D(scene, view). Rows are evaluated independently and
/// reduced in row order, so results do not depend on the thread count.
inline DataTermResult data_term(const Scene& scene, std::span<const View> views,
                                const EnergyConfig& cfg, bool with_gradient,
                                const EvalOptions& opt = {}) {
  DataTermResult out;
  if (with_gradient) out.gradient = GradVector(scene.size());
  for (const auto& v : views) {
    validate(v.camera);
    validate(v.image);
    if (v.image.width != v.camera.width || v.image.height != v.camera.height)
      throw std::invalid_argument("data term: image size does not match camera");
    if (cfg.weighting == PixelWeighting::per_pixel && !v.image.has_weights())
      throw std::invalid_argument("data term: per-pixel weighting selected but image has no weights");
  }
  const std::vector<double> radii2 = cutoff_radii2(scene, scene.cutoff);
  for (const auto& v : views) {
    const std::size_t rows = static_cast<std::size_t>(v.camera.height);
    std::vector<double> row_value(rows, 0.0);
    std::vector<GradVector> row_grad(with_gradient ? rows : 0, GradVector(scene.size()));
    parallel_for(
        rows,
        [&](std::size_t r) {
          detail::RowWork work(opt.scheme, radii2);
          const int y = static_cast<int>(r);
          double acc = 0.0;
          for (int x = 0; x < v.camera.width; ++x) {
            const std::size_t idx = r * v.camera.width + x;
            const double weight = cfg.weighting == PixelWeighting::per_pixel ? v.image.weights[idx] : 1.0;
            acc += detail::pixel_term(scene, pixel_ray(v.camera, x, y), v.image.pixels[idx], weight,
                                      cfg, work, with_gradient ? &row_grad[r] : nullptr);
          }
          row_value[r] = acc;
        },
        opt.threads);
    for (std::size_t r = 0; r < rows; ++r) {
      out.value += row_value[r];
      if (with_gradient) out.gradient += row_grad[r];
    }
  }
  return out;
}

/// Sum of squared radiance residuals over all pixels.
inline double d_pc(const Scene& scene, const Camera& cam, const Image& target,
                   const EvalOptions& opt = {}) {
  EnergyConfig cfg;
  cfg.term = DataTerm::pc;
  const View v{cam, target};
  return data_term(scene, std::span<const View>(&v, 1), cfg, false, opt).value;
}

/// Visibility-weighted color dissimilarity; area-weighted when cfg selects
/// per-pixel weighting.
inline double d_mc(const Scene& scene, const Camera& cam, const Image& target, EnergyConfig cfg,
                   const EvalOptions& opt = {}) {
  cfg.term = DataTerm::mc;
  const View v{cam, target};
  return data_term(scene, std::span<const View>(&v, 1), cfg, false, opt).value;
}

// ---------------------------------------------------------------------------
// Prior

/// w_a ||theta_t - 2 theta_{t-1} + theta_{t-2}||^2 + w_l sum max(0, lo - theta, theta - hi)^2.
/// history[0] is theta_t; missing older frames repeat the oldest available.
inline double prior(std::span<const std::vector<double>> history, const EnergyConfig& cfg,
                    std::vector<double>* grad = nullptr) {
  if (history.empty()) throw std::invalid_argument("prior: history must hold at least theta_t");
  const auto& t0 = history[0];
  const auto& t1 = history.size() > 1 ? history[1] : t0;
  const auto& t2 = history.size() > 2 ? history[2] : t1;
  if (grad) grad->assign(t0.size(), 0.0);
  double p = 0.0;
  for (std::size_t i = 0; i < t0.size(); ++i) {
    const double acc = t0[i] - 2.0 * t1[i] + t2[i];
    p += cfg.accel_weight * acc * acc;
    if (grad) (*grad)[i] += 2.0 * cfg.accel_weight * acc;
    if (i < cfg.limits.size()) {
      const auto& lim = cfg.limits[i];
      double v = 0.0;
      if (t0[i] < lim.lo) v = t0[i] - lim.lo;
      else if (t0[i] > lim.hi) v = t0[i] - lim.hi;
      p += cfg.limit_weight * v * v;
      if (grad) (*grad)[i] += 2.0 * cfg.limit_weight * v;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Albedo back-projection

struct BackProjection {
  std::vector<Vec3> albedos;
  std::vector<double> total_visibility;
  std::vector<std::size_t> flagged;  ///< Gaussians left unchanged (visibility < 1e-9)
};

/// a_q = sum w V_q I / sum w V_q over all pixels of all views, w the pixel
/// weight (1 without weights), so zero-weight pixels act as a mask.
inline BackProjection back_project_albedo(const Scene& scene, std::span<const View> views,
                                          const EvalOptions& opt = {}) {
  const std::size_t n = scene.size();
  std::vector<Vec3> num(n, Vec3::Zero());
  std::vector<double> den(n, 0.0);
  const std::vector<double> radii2 = cutoff_radii2(scene, scene.cutoff);
  for (const auto& v : views) {
    const std::size_t rows = static_cast<std::size_t>(v.camera.height);
    std::vector<std::vector<Vec3>> rnum(rows, std::vector<Vec3>(n, Vec3::Zero()));
    std::vector<std::vector<double>> rden(rows, std::vector<double>(n, 0.0));
    parallel_for(
        rows,
        [&](std::size_t r) {
          RayKernel kernel(opt.scheme);
          std::vector<RayGaussian> proj;
          for (int x = 0; x < v.camera.width; ++x) {
            if (v.image.weight(r * v.camera.width + x) == 0.0) continue;
            project_scene(scene, pixel_ray(v.camera, x, static_cast<int>(r)), scene.cutoff, radii2, proj);
            if (proj.empty()) continue;
            kernel.forward(proj);
            const auto vis = kernel.visibility();
            const std::size_t idx = r * v.camera.width + x;
            const double w = v.image.weight(idx);
            const Vec3& c = v.image.pixels[idx];
            for (std::size_t i = 0; i < proj.size(); ++i) {
              rnum[r][proj[i].source_index] += w * vis[i] * c;
              rden[r][proj[i].source_index] += w * vis[i];
            }
          }
        },
        opt.threads);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t q = 0; q < n; ++q) {
        num[q] += rnum[r][q];
        den[q] += rden[r][q];
      }
  }
  BackProjection out;
  out.albedos.resize(n);
  out.total_visibility = den;
  for (std::size_t q = 0; q < n; ++q) {
    if (den[q] < 1e-9) {
      out.albedos[q] = scene.gaussians[q].albedo;
      out.flagged.push_back(q);
    } else {
      out.albedos[q] = num[q] / den[q];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pose objective

/// F(theta) = sum_views D(gamma(theta), I_view) + P(theta).
class PoseObjective {
 public:
  PoseObjective(Scene templ, PoseParams mapping, std::vector<View> views, EnergyConfig cfg,
                EvalOptions opt = {})
      : templ_(std::move(templ)),
        mapping_(std::move(mapping)),
        views_(std::move(views)),
        cfg_(std::move(cfg)),
        opt_(std::move(opt)) {
    validate(cfg_);
  }

  /// Previous frames for the acceleration prior, newest first.
  void set_history(std::vector<std::vector<double>> previous) { history_ = std::move(previous); }

  std::size_t dimension() const { return parameter_count(mapping_, templ_.size()); }
  const Scene& template_scene() const { return templ_; }
  const PoseParams& mapping() const { return mapping_; }
  const std::vector<View>& views() const { return views_; }
  const EnergyConfig& config() const { return cfg_; }

  Scene scene_at(std::span<const double> theta) const {
    PoseParams p = mapping_;
    p.values.assign(theta.begin(), theta.end());
    return apply_mapping(p, templ_);
  }

  double value(std::span<const double> theta) const {
    const Scene s = scene_at(theta);
    double f = data_term(s, views_, cfg_, false, opt_).value;
    if (has_prior()) f += prior_value(theta, nullptr);
    return f;
  }

  double value_and_gradient(std::span<const double> theta, std::vector<double>& grad) const {
    PoseParams p = mapping_;
    p.values.assign(theta.begin(), theta.end());
    const Scene s = apply_mapping(p, templ_);
    const DataTermResult d = data_term(s, views_, cfg_, true, opt_);
    grad = mapping_jacobian(p, templ_).apply_transpose(d.gradient.flatten());
    double f = d.value;
    if (has_prior()) {
      std::vector<double> pg;
      f += prior_value(theta, &pg);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += pg[i];
    }
    return f;
  }

 private:
  bool has_prior() const { return cfg_.accel_weight > 0.0 || cfg_.limit_weight > 0.0; }

  double prior_value(std::span<const double> theta, std::vector<double>* grad) const {
    std::vector<std::vector<double>> h;
    h.emplace_back(theta.begin(), theta.end());
    for (const auto& prev : history_) h.push_back(prev);
    return prior(h, cfg_, grad);
  }

  Scene templ_;
  PoseParams mapping_;
  std::vector<View> views_;
  EnergyConfig cfg_;
  EvalOptions opt_;
  std::vector<std::vector<double>> history_;
};

}  // namespace gaussvis
