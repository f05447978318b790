// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "gaussvis/fixtures.hpp"

using namespace gaussvis;
using namespace gaussvis::fixtures;

TEST(Random, UniformHelpers) {
  std::mt19937_64 a(7), b(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(a);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_EQ(u, uniform01(b));
    EXPECT_LE(uniform_ball(a, 2.0).norm(), 2.0);
    uniform_ball(b, 2.0);
  }
}

TEST(CubeSymmetries, TwentyFourProperRotations) {
  const auto s = cube_symmetries();
  ASSERT_EQ(s.size(), 24u);
  std::set<std::vector<double>> distinct;
  for (const Mat3& m : s) {
    EXPECT_NEAR(m.determinant(), 1.0, 1e-15);
    EXPECT_TRUE((m * m.transpose()).isIdentity(1e-15));
    distinct.insert(std::vector<double>(m.data(), m.data() + 9));
  }
  EXPECT_EQ(distinct.size(), 24u);
}

class RigTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { rig_ = new SphereCubeRig(sphere_cube_rig({0.1, 48})); }
  static void TearDownTestSuite() { delete rig_; }
  static SphereCubeRig* rig_;
};
SphereCubeRig* RigTest::rig_ = nullptr;

TEST_F(RigTest, TruthReproducesTarget) {
  const PoseObjective obj = rig_objective(*rig_);
  EXPECT_EQ(obj.value(rig_->truth), 0.0);
  const PoseError e = pose_error(*rig_, rig_->truth);
  EXPECT_EQ(e.sphere, 0.0);
  EXPECT_LT(e.cube, 1e-15);
}

TEST_F(RigTest, PoseErrorIgnoresCubeSymmetries) {
  const Mat3 r = rotation_from_axis_angle(Vec3(rig_->truth[6], rig_->truth[7], rig_->truth[8]));
  for (const Mat3& s : cube_symmetries()) {
    std::vector<double> th = rig_->truth;
    const Vec3 w = axis_angle_from_rotation(r * s);
    for (int i = 0; i < 3; ++i) th[6 + i] = w[i];
    EXPECT_LT(pose_error(*rig_, th).cube, 1e-12);
    // The rendered cube is identical too.
    EXPECT_LT(rig_objective(*rig_).value(th), 1e-18);
  }
}

TEST_F(RigTest, PoseErrorUnits) {
  std::vector<double> th = rig_->truth;
  th[0] += 2.0 * rig_->sphere_radius * 0.3;
  th[4] -= rig_->cube_edge * 0.2;
  const PoseError e = pose_error(*rig_, th);
  EXPECT_NEAR(e.sphere, 0.3, 1e-12);
  EXPECT_NEAR(e.cube, 0.2, 1e-12);
  EXPECT_FALSE(tracking_success(e));
  EXPECT_TRUE(tracking_success({0.1, 0.1}));
}

TEST_F(RigTest, RandomInitsStayInTheBox) {
  std::mt19937_64 rng(3), again(3);
  for (int i = 0; i < 200; ++i) {
    const auto th = random_init(*rig_, rng);
    EXPECT_EQ(th, random_init(*rig_, again));
    for (int k = 0; k < 6; ++k) EXPECT_LE(std::abs(th[k] - rig_->truth[k]), rig_->init_box[k % 3]);
    EXPECT_LE(Vec3(th[6], th[7], th[8]).norm(), std::numbers::pi);
  }
}

TEST_F(RigTest, ManualInitsStartAwayFromTheTarget) {
  for (const auto& init : rig_->manual_inits) EXPECT_FALSE(tracking_success(pose_error(*rig_, init)));
  // Occluded init: the cube sits behind the sphere as seen from the camera.
  const auto& occ = rig_->manual_inits[2];
  const Vec3 sphere(occ[0], occ[1], occ[2]), cube(occ[3], occ[4], occ[5]);
  const Vec3 eye = rig_->camera.position;
  EXPECT_GT((cube - eye).norm(), (sphere - eye).norm() + 0.5);
  EXPECT_LT((cube - eye).normalized().cross((sphere - eye).normalized()).norm(), rig_->sphere_radius / (sphere - eye).norm());
}

TEST(OcclusionSweep, Geometry) {
  const OcclusionSweep f = occlusion_sweep();
  ASSERT_EQ(f.scene.size(), 2u);
  EXPECT_EQ(f.scene.gaussians[0].albedo, Vec3::Zero());
  const Ray r = pixel_ray(f.camera, f.center_px, f.center_px);
  EXPECT_LT((r.direction - Vec3::UnitZ()).norm(), 1e-15);
  EXPECT_LT(occlusion_visibility(f, 0.0), occlusion_visibility(f, 1.2));
}

TEST(ArmRig, TargetDiffersFromHangingPose) {
  const ArmRig a = arm_rig(0.1, 24);
  EXPECT_EQ(a.templ.size(), 6u);
  const Image hanging = render(a.templ, a.camera);
  double diff = 0.0;
  for (std::size_t i = 0; i < hanging.size(); ++i) diff += (hanging.pixels[i] - a.target.pixels[i]).squaredNorm();
  EXPECT_GT(diff, 1.0);
  EXPECT_EQ(arm_theta(a.target_angle), a.mapping.values);
}

TEST(TotalVariation, Examples) {
  EXPECT_EQ(total_variation(std::vector<double>{}), 0.0);
  EXPECT_EQ(total_variation(std::vector<double>{1.0, 3.0, 2.0, 2.0}), 3.0);
}

TEST(ShapeFixture, ViewsSeeBothSpheres) {
  const ShapeFixture f = shape_fixture(8, 24);
  ASSERT_EQ(f.cameras.size(), 9u);
  for (std::size_t v = 0; v < f.cameras.size(); ++v) {
    int red = 0, green = 0;
    for (std::size_t i = 0; i < f.colors[v].size(); ++i) {
      if (f.colors[v].weight(i) == 0.0) {
        EXPECT_EQ(f.silhouettes[v].pixels[i], Vec3::Zero());
        continue;
      }
      EXPECT_EQ(f.silhouettes[v].pixels[i], Vec3::Ones());
      red += f.colors[v].pixels[i] == f.spheres[0].albedo;
      green += f.colors[v].pixels[i] == f.spheres[1].albedo;
    }
    EXPECT_GT(red, 10) << v;
    EXPECT_GT(green, red) << v;
  }
}

TEST(ShapeFixture, SeedsInsideTheBox) {
  const ShapeFixture f = shape_fixture(8, 16);
  const Scene s = shape_seeds(f, 50, 9);
  ASSERT_EQ(s.size(), 50u);
  for (const auto& g : s.gaussians) {
    EXPECT_TRUE((g.center.array() >= f.box_lo.array()).all());
    EXPECT_TRUE((g.center.array() <= f.box_hi.array()).all());
    EXPECT_EQ(g.albedo, Vec3::Ones());
  }
  EXPECT_TRUE(shape_seeds(f, 0, 9).empty());
}

TEST(SilhouetteIou, Examples) {
  Image a(2, 2), b(2, 2);
  EXPECT_EQ(silhouette_iou(a, b), 1.0);
  a.at(0, 0) = Vec3::Ones();
  EXPECT_EQ(silhouette_iou(a, b), 0.0);
  b.at(0, 0) = Vec3::Ones();
  b.at(1, 0) = Vec3(0.6, 0, 0);
  EXPECT_EQ(silhouette_iou(a, b), 0.5);
}
