// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gaussvis/calibration.hpp"
#include "gaussvis/fixtures.hpp"
#include "gaussvis/imaging.hpp"
#include "gaussvis/visibility.hpp"
#include "oracles.hpp"

using namespace gaussvis;

namespace {

std::vector<RayGaussian> single(double c, double mu, double sigma) { return {RayGaussian{c, mu, sigma, 0}}; }

}  // namespace

TEST(Erf, PinnedValue) { EXPECT_EQ(std::erf(1.0), 0.8427007929497149); }

TEST(Transmittance, UnityAtOrigin) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(transmittance(oracle::random_ray(rng, 1 + i), 0.0), 1.0);
}

TEST(Transmittance, FarLimitOfSingleGaussian) {
  const auto g = single(1.0, 5.0, 1.0);
  const double analytic = transmittance(g, 100.0);
  EXPECT_NEAR(analytic, oracle::transmittance(g, 100.0), 1e-10);
  EXPECT_NEAR(analytic, std::exp(-std::sqrt(2.0 * M_PI) * (1.0 + std::erf(5.0 / std::sqrt(2.0))) / 2.0), 1e-15);
  EXPECT_NEAR(analytic, 0.08150, 5e-5);
}

TEST(Transmittance, AtTheCenter) {
  const auto g = single(1.0, 5.0, 1.0);
  EXPECT_NEAR(transmittance(g, 5.0), oracle::transmittance(g, 5.0), 1e-10);
}

TEST(Transmittance, MatchesQuadratureOnRandomRays) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> s(0.0, 15.0);
  for (int i = 0; i < 100; ++i) {
    const auto g = oracle::random_ray(rng, 1 + i % 10);
    const double x = s(rng);
    EXPECT_NEAR(transmittance(g, x), oracle::transmittance(g, x), 1e-8);
  }
}

TEST(Transmittance, NonIncreasing) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 30; ++i) {
    const auto g = oracle::random_ray(rng, 5);
    double prev = 1.0;
    for (double x = 0.0; x < 20.0; x += 0.05) {
      const double t = transmittance(g, x);
      EXPECT_LE(t, prev);
      EXPECT_GT(t, 0.0);
      prev = t;
    }
  }
}

TEST(PointVisibility, Examples) {
  EXPECT_EQ(point_visibility(Scene{}, Vec3(1, 2, 3), Vec3::Zero()), 1.0);

  Scene s;
  s.gaussians.push_back(Gaussian{2.0, Vec3(0, 0, 10), 0.5, Vec3::Ones()});
  EXPECT_NEAR(point_visibility(s, Vec3(0, 0, 6.5), Vec3::Zero()), 1.0, 1e-9);
  EXPECT_LT(point_visibility(s, Vec3(0, 0, 12), Vec3::Zero()), 0.5);
  EXPECT_THROW(point_visibility(s, Vec3(1, 1, 1), Vec3(1, 1, 1)), std::domain_error);
}

TEST(PointVisibility, DisocclusionIsSmoothAndIncreasing) {
  const auto f = fixtures::occlusion_sweep();
  double prev = -1.0;
  for (int i = 2; i <= 10; ++i) {
    const double theta = 0.1 * i;
    Scene s = f.scene;
    s.gaussians[f.red].center.y() = f.red_y0 + theta;
    const double v = point_visibility(s, s.gaussians[f.red].center, f.camera.position);
    EXPECT_GT(v, prev) << "theta " << theta;
    prev = v;
  }
}

TEST(GaussianVisibility, CalibratedOnAxis) {
  const CalibrationResult c = calibrate_sphere(1.0, 0.1);
  const auto g = single(c.magnitude, 7.0, c.sigma);
  EXPECT_NEAR(gaussian_visibility(g, 0, SampleScheme{}), 0.9, 1e-3);
}

TEST(GaussianVisibility, ZeroMagnitude) {
  std::vector<RayGaussian> g{{0.0, 3.0, 1.0, 0}, {1.0, 5.0, 1.0, 1}};
  EXPECT_EQ(gaussian_visibility(g, 0, SampleScheme{}), 0.0);
}

TEST(GaussianVisibility, OpaqueFrontHidesRear) {
  const CalibrationResult c = calibrate_sphere(1.0, 0.0001);
  std::vector<RayGaussian> g{{c.magnitude, 5.0, c.sigma, 0}, {c.magnitude, 12.0, c.sigma, 1}};
  const double rear = gaussian_visibility(g, 1, SampleScheme{});
  EXPECT_LT(rear, 0.01);
  EXPECT_LT(oracle::dense_gaussian_visibility(g, 1, 1e-3), 0.01);
}

TEST(GaussianVisibility, SumBoundedBySampling) {
  // Rays through chains of non-intersecting calibrated spheres.
  std::mt19937_64 rng(13);
  const SampleScheme scheme;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Calibrator cals[4] = {Calibrator(0.5), Calibrator(0.1), Calibrator(0.01), Calibrator(0.0001)};
  for (int i = 0; i < 400; ++i) {
    const Calibrator& cal = cals[i % 4];
    std::vector<RayGaussian> g;
    double z = 3.0;
    for (int q = 0; q < 1 + i % 12; ++q) {
      const double r = 0.2 + 0.8 * u(rng), d = r * u(rng);
      const CalibrationResult c = cal(r);
      g.push_back({c.magnitude * std::exp(-d * d / (2.0 * c.sigma * c.sigma)), z + r, c.sigma, static_cast<std::size_t>(q)});
      z += 2.0 * r + 0.5 * u(rng);
    }
    double sum = 0.0;
    for (std::size_t q = 0; q < g.size(); ++q) {
      const double v = gaussian_visibility(g, q, scheme);
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_LE(sum, 1.0 + 1e-2);
  }
}

TEST(Radiance, Examples) {
  const SampleScheme scheme;
  EXPECT_EQ(radiance(std::vector<RayGaussian>{}, std::vector<Vec3>{}, scheme), Vec3::Zero());

  std::mt19937_64 rng(4);
  const auto g = oracle::random_ray(rng, 4);
  std::vector<Vec3> white(4, Vec3::Ones());
  const Vec3 l = radiance(g, white, scheme);
  double sum = 0.0;
  for (std::size_t q = 0; q < g.size(); ++q) sum += gaussian_visibility(g, q, scheme);
  EXPECT_EQ(l.x(), sum);
  EXPECT_EQ(l.y(), sum);
  EXPECT_EQ(l.z(), sum);
  EXPECT_THROW(radiance(g, std::vector<Vec3>(3), scheme), std::invalid_argument);
}

TEST(Radiance, SingleHumpBoundedByAbsorbedFraction) {
  const auto g = single(0.6, 4.0, 1.0);
  const double absorbed = 1.0 - oracle::transmittance(g, 40.0);
  const double l = radiance(g, std::vector<Vec3>{Vec3::Ones()}, SampleScheme{}).x();
  EXPECT_LE(l, absorbed + 2e-2);
  // The exact per-Gaussian integral equals the absorbed fraction.
  EXPECT_NEAR(oracle::dense_gaussian_visibility(g, 0, 1e-3), absorbed, 1e-6);
}

TEST(RayKernel, MatchesReferenceVisibility) {
  std::mt19937_64 rng(17);
  for (const SampleScheme& scheme : {SampleScheme{}, SampleScheme{{-2, -1, 0, 1, 2}, 0.5}}) {
    RayKernel k(scheme);
    for (int i = 0; i < 50; ++i) {
      const auto g = oracle::random_ray(rng, 1 + i % 9);
      for (bool keep : {false, true}) {
        k.forward(g, keep);
        for (std::size_t q = 0; q < g.size(); ++q)
          EXPECT_NEAR(k.visibility()[q], gaussian_visibility(g, q, scheme),
                      1e-14 * std::max(1.0, std::abs(k.visibility()[q])));
      }
    }
  }
}

TEST(ApplyCutoff, Examples) {
  std::vector<RayGaussian> g{{1e-6, 1.0, 1.0, 3}, {1e-4, 2.0, 1.0, 8}};
  EXPECT_EQ(apply_cutoff(g, 0.0).size(), 2u);
  const auto kept = apply_cutoff(g, 1e-5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].source_index, 8u);
}

TEST(ApplyCutoff, RenderImpactIsNegligible) {
  Scene s = build_from_spheres({{Vec3(0, 0, 5), 0.5, Vec3(1, 0.2, 0.1)},
                                {Vec3(0.6, 0.2, 6), 0.4, Vec3(0.1, 0.9, 0.2)},
                                {Vec3(-0.4, -0.3, 4.5), 0.3, Vec3(0.3, 0.3, 1)}},
                               0.1);
  const Camera cam = look_at(Vec3::Zero(), Vec3(0, 0, 5), Vec3::UnitY(), 40.0, 32, 32);
  s.cutoff = 0.0;
  const Image exact = render(s, cam);
  s.cutoff = 1e-5;
  const Image cut = render(s, cam);
  double worst = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i)
    worst = std::max(worst, (exact.pixels[i] - cut.pixels[i]).cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 1e-3);
}

TEST(Render, CalibratedCenterPixel) {
  for (double m : {0.5, 0.1}) {
    const Scene s = build_from_spheres({{Vec3(0, 0, 6), 1.0, Vec3::Ones()}}, m);
    const Camera cam = look_at(Vec3::Zero(), Vec3(0, 0, 6), Vec3::UnitY(), 20.0, 9, 9);
    const Image img = render(s, cam);
    const Vec3 c = img.at(4, 4);
    EXPECT_NEAR(c.x(), 1.0 - m, 1e-3);
    EXPECT_NEAR(c.y(), 1.0 - m, 1e-3);
    EXPECT_NEAR(c.z(), 1.0 - m, 1e-3);
  }
}

TEST(Render, RadianceDecomposesIntoVisibilities) {
  const auto f = fixtures::occlusion_sweep();
  Scene s = f.scene;
  s.gaussians[f.red].center.y() = f.red_y0 + 1.0;
  const Image img = render(s, f.camera);
  const double v = fixtures::occlusion_visibility(f, 1.0);
  EXPECT_NEAR(img.at(f.center_px, f.center_px).x(), v * s.gaussians[f.red].albedo.x(), 1e-9);
}
