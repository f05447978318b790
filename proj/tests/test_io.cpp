// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <limits>

#include "gaussvis/io.hpp"

using namespace gaussvis;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("gaussvis_test_io_" + name)).string();
}

std::string data(const std::string& name) { return std::string(GAUSSVIS_TEST_DATA) + "/" + name; }

std::string pfm_bytes(int w, int h, const std::vector<float>& values, const char* scale = "-1.0") {
  std::string s = "PF\n" + std::to_string(w) + " " + std::to_string(h) + "\n" + scale + "\n";
  s.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
  return s;
}

}  // namespace

TEST(Pfm, RoundTripIsBitExact) {
  Image img(2, 2);
  img.at(0, 0) = Vec3(0.1f, 0.2f, 0.3f);
  img.at(1, 0) = Vec3(1.0f, 0.0f, 1e-20f);
  img.at(0, 1) = Vec3(0.5f, 0.25f, 0.125f);
  img.at(1, 1) = Vec3(3.0f, 7.5f, 0.333f);
  const std::string p = temp_path("rt.pfm");
  write_pfm(p, img);
  const Image back = read_pfm(p);
  ASSERT_EQ(back.width, 2);
  ASSERT_EQ(back.height, 2);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(back.pixels[i], img.pixels[i]);
  const std::string first = detail::read_file(p);
  write_pfm(p, back);
  EXPECT_EQ(detail::read_file(p), first);
  fs::remove(p);
}

TEST(Pfm, BigEndianAndBottomUpRows) {
  // Two rows, one pixel each, big-endian; the file stores the bottom row first.
  std::string s = "PF\n1 2\n1.0\n";
  auto put = [&](float f) {
    unsigned char b[4];
    std::memcpy(b, &f, 4);
    if (detail::host_little_endian()) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
    s.append(reinterpret_cast<const char*>(b), 4);
  };
  for (float f : {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f}) put(f);
  const std::string p = temp_path("be.pfm");
  detail::write_file(p, s);
  const Image img = read_pfm(p);
  EXPECT_EQ(img.at(0, 0), Vec3(4, 5, 6));
  EXPECT_EQ(img.at(0, 1), Vec3(1, 2, 3));
  fs::remove(p);
}

TEST(Pfm, RejectsMalformedInput) {
  const std::string p = temp_path("bad.pfm");
  detail::write_file(p, "PX\n1 1\n-1\n");
  EXPECT_THROW(read_pfm(p), IoError);
  detail::write_file(p, pfm_bytes(2, 2, {1, 2, 3}));
  EXPECT_THROW(read_pfm(p), IoError);
  detail::write_file(p, pfm_bytes(0, 2, {}));
  EXPECT_THROW(read_pfm(p), IoError);
  detail::write_file(p, pfm_bytes(1, 1, {1, std::numeric_limits<float>::quiet_NaN(), 0}));
  EXPECT_THROW(read_pfm(p), IoError);
  detail::write_file(p, pfm_bytes(1, 1, {1, std::numeric_limits<float>::infinity(), 0}));
  EXPECT_THROW(read_pfm(p), IoError);
  fs::remove(p);
  EXPECT_THROW(read_pfm(temp_path("does_not_exist.pfm")), IoError);
}

TEST(Ppm, PureRed) {
  const std::string p = temp_path("red.ppm");
  detail::write_file(p, std::string("P6\n1 1\n255\n") + '\xff' + '\0' + '\0');
  const Image img = read_ppm(p);
  EXPECT_EQ(img.at(0, 0), Vec3(1, 0, 0));
  fs::remove(p);
}

TEST(Ppm, MaxvalScaling) {
  const std::string p = temp_path("maxval.ppm");
  detail::write_file(p, std::string("P6\n# comment\n2 1\n100\n") + '\x32' + '\x64' + '\0' + '\x0a' + '\0' + '\x01');
  const Image img = read_ppm(p);
  EXPECT_EQ(img.at(0, 0), Vec3(0.5, 1.0, 0.0));
  EXPECT_EQ(img.at(1, 0), Vec3(0.1, 0.0, 0.01));
  fs::remove(p);
}

TEST(Ppm, RoundTripOnQuantizedValues) {
  Image img(3, 2);
  for (std::size_t i = 0; i < img.size(); ++i)
    img.pixels[i] = Vec3(static_cast<double>(i * 40) / 255.0, static_cast<double>(255 - i * 7) / 255.0, 0.0);
  const std::string p = temp_path("rt.ppm");
  write_ppm(p, img);
  const Image back = read_ppm(p);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(back.pixels[i], img.pixels[i]);
  fs::remove(p);
}

TEST(Ppm, SixteenBitSamples) {
  const std::string p = temp_path("16.ppm");
  detail::write_file(p, std::string("P6\n1 1\n1000\n") + '\x03' + '\xe8' + '\x01' + '\xf4' + '\0' + '\0');
  EXPECT_EQ(read_ppm(p).at(0, 0), Vec3(1.0, 0.5, 0.0));
  fs::remove(p);
}

TEST(Ppm, RejectsMalformedInput) {
  const std::string p = temp_path("bad.ppm");
  detail::write_file(p, std::string("P6\n2 2\n255\n") + "abc");
  EXPECT_THROW(read_ppm(p), IoError);
  detail::write_file(p, "P6\n1 1\n0\n123");
  EXPECT_THROW(read_ppm(p), IoError);
  detail::write_file(p, "P3\n1 1\n255\n1 2 3\n");
  EXPECT_THROW(read_ppm(p), IoError);
  fs::remove(p);
}

TEST(Image, DispatchesOnExtension) {
  Image img(1, 1, Vec3(0.25, 0.5, 1.0));
  for (const char* ext : {".pfm", ".ppm"}) {
    const std::string p = temp_path(std::string("dispatch") + ext);
    write_image(p, img);
    EXPECT_EQ(read_image(p).at(0, 0), Vec3(ext[2] == 'f' ? 0.25 : 64.0 / 255.0, ext[2] == 'f' ? 0.5 : 128.0 / 255.0, 1.0));
    fs::remove(p);
  }
  EXPECT_THROW(write_image(temp_path("x.png"), img), IoError);
}

TEST(Weights, RoundTripAndValidation) {
  const std::string p = temp_path("w.pfm");
  write_weights(p, 2, 1, {0.0, 2.5});
  int w = 0, h = 0;
  EXPECT_EQ(read_weights(p, w, h), (std::vector<double>{0.0, 2.5}));
  EXPECT_EQ(w, 2);
  EXPECT_EQ(h, 1);
  write_weights(p, 1, 1, {-1.0});
  EXPECT_THROW(read_weights(p, w, h), IoError);
  fs::remove(p);
}

TEST(ParseScene, MinimalOneGaussian) {
  const SceneFile f = load_scene(data("single.scene"));
  ASSERT_EQ(f.scene.size(), 1u);
  EXPECT_EQ(f.scene.gaussians[0].magnitude, 2.5);
  EXPECT_EQ(f.scene.gaussians[0].center, Vec3(0, 0, 5));
  EXPECT_EQ(f.scene.gaussians[0].sigma, 0.5);
  EXPECT_EQ(f.scene.gaussians[0].albedo, Vec3(0.8, 0.4, 0.2));
  ASSERT_EQ(f.cameras.size(), 1u);
  EXPECT_EQ(f.cameras[0].width, 16);
  EXPECT_FALSE(f.mapping.has_value());
}

TEST(ParseScene, SphereSectionIsCalibrated) {
  const SceneFile f = parse_scene("[scene]\nsmoothness = 0.1\n[sphere]\ncenter = 1 2 3\nradius = 1\nalbedo = 1 0 0\n");
  ASSERT_EQ(f.scene.size(), 1u);
  EXPECT_EQ(f.scene.smoothness, 0.1);
  const CalibrationResult c = calibrate_sphere(1.0, 0.1);
  EXPECT_EQ(f.scene.gaussians[0].magnitude, c.magnitude);
  EXPECT_EQ(f.scene.gaussians[0].sigma, c.sigma);
  EXPECT_EQ(f.scene.gaussians[0].center, Vec3(1, 2, 3));
}

TEST(ParseScene, ErrorsNameTheFieldAndLocation) {
  try {
    parse_scene("[gaussian]\nmagnitude = 1\ncenter = 0 0 0\nsigma = -0.5\n");
    FAIL() << "negative sigma accepted";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("sigma"), std::string::npos) << e.what();
    EXPECT_EQ(e.line, 4);
  }
  try {
    parse_scene("[scene]\nsmoothness = 0.1\ncutoff = abc\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 3);
    EXPECT_EQ(e.column, 10);
  }
  EXPECT_THROW(parse_scene("[bogus]\n"), ParseError);
  EXPECT_THROW(parse_scene("[scene]\nfoo = 1\n"), ParseError);
  EXPECT_THROW(parse_scene("[scene]\nsmoothness = 1.5\n"), ParseError);
  EXPECT_THROW(parse_scene("[sphere]\nradius = 1\n[gaussian]\nsigma = 1\n"), ParseError);
  EXPECT_THROW(parse_scene("[gaussian]\nsigma = 1\n[object]\ngaussians = 0 3\n"), ParseError);
  EXPECT_THROW(parse_scene("[gaussian]\nsigma = 1\n[mapping]\ntheta = 1 2\n"), ParseError);
}

TEST(ParseScene, SerializeFixpointOnFixtures) {
  for (const char* name : {"single.scene", "empty.scene", "actor.scene", "rig.scene", "occlusion.scene", "arm.scene"}) {
    const SceneFile a = load_scene(data(name));
    const std::string text = serialize_scene(a);
    const SceneFile b = parse_scene(text);
    EXPECT_TRUE(a == b) << name;
    EXPECT_EQ(serialize_scene(b), text) << name;
  }
}

TEST(ParseScene, RigFixtureContents) {
  const SceneFile f = load_scene(data("rig.scene"));
  EXPECT_EQ(f.scene.size(), 28u);
  ASSERT_TRUE(f.mapping.has_value());
  EXPECT_EQ(f.mapping->objects.size(), 2u);
  EXPECT_EQ(f.track.truth.size(), 9u);
  EXPECT_EQ(f.track.inits.size(), 3u);
}
