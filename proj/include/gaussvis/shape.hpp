// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

/// @file shape.hpp
/// Free-form shape and appearance estimation: seed Gaussians move and scale
/// freely to match multi-view silhouettes, then albedos are back-projected
/// from color views.

#pragma once

#include <span>
#include <vector>

#include "gaussvis/energy.hpp"
#include "gaussvis/optimizer.hpp"
#include "gaussvis/parametrization.hpp"

namespace gaussvis {

struct ShapeOptions {
  EnergyConfig energy{};  ///< term is forced to pc
  OptimConfig optimizer = default_optimizer();
  EvalOptions eval{};

  static OptimConfig default_optimizer() {
    OptimConfig c;
    c.max_iterations = 300;
    c.gradient_tolerance = 1e-7;
    c.initial_step = 0.01;
    c.max_step = 0.3;
    c.gradient_in_line_search = true;
    return c;
  }
};

struct ShapeResult {
  Scene scene;              ///< optimized geometry with back-projected albedos
  double initial_energy = 0.0;
  OptimResult optim;
  BackProjection albedo;    ///< empty when no color views were given
};

/// Optimizes [center, log sigma] of every seed against white-on-black
/// silhouettes; magnitudes and albedos are held fixed during the fit.
inline ShapeResult estimate_shape(const Scene& seeds, std::span<const View> silhouettes,
                                  std::span<const View> colors, const ShapeOptions& opt = {}) {
  ShapeResult out;
  out.scene = seeds;
  if (seeds.empty()) return out;
  PoseParams p;
  p.mapping = MappingKind::free_gaussian;
  p.values = identity_theta(p, seeds);
  EnergyConfig cfg = opt.energy;
  cfg.term = DataTerm::pc;
  const PoseObjective obj(seeds, p, std::vector<View>(silhouettes.begin(), silhouettes.end()), cfg, opt.eval);
  out.initial_energy = obj.value(p.values);
  out.optim = minimize(make_objective(obj), p.values, opt.optimizer);
  out.scene = obj.scene_at(out.optim.theta);
  if (!colors.empty()) {
    out.albedo = back_project_albedo(out.scene, colors, opt.eval);
    for (std::size_t q = 0; q < out.scene.size(); ++q) out.scene.gaussians[q].albedo = out.albedo.albedos[q];
  }
  return out;
}

}  // namespace gaussvis
