// Copyright 2026 The gaussvis Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: render, gradcheck, calibrate, track, shape, sweep.
// Exit codes: 0 success, 1 check or optimization failure, 2 usage or I/O error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gaussvis/calibration.hpp"
#include "gaussvis/energy.hpp"
#include "gaussvis/gradients.hpp"
#include "gaussvis/io.hpp"
#include "gaussvis/optimizer.hpp"
#include "gaussvis/parametrization.hpp"
#include "gaussvis/shape.hpp"

using namespace gaussvis;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string scene, out, trace, energy, samples, range, param, weights;
  std::vector<std::string> frames, colors;
  int camera = 0, inits = -1, steps = 100, count = 100;
  std::uint64_t seed = 0;
  double m = -1.0, cutoff = -1.0;
  std::optional<double> radius;
  unsigned threads = 0;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::pair<double, double> parse_range(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw UsageError("--range expects lo:hi, got '" + s + "'");
  try {
    std::size_t a = 0, b = 0;
    const double lo = std::stod(s.substr(0, colon), &a);
    const double hi = std::stod(s.substr(colon + 1), &b);
    if (a != colon || b != s.size() - colon - 1) throw std::invalid_argument("trailing characters");
    return {lo, hi};
  } catch (const std::exception&) {
    throw UsageError("--range expects lo:hi, got '" + s + "'");
  }
}

/// "lo:hi" or "lo:hi:step": integer offsets lo..hi at spacing step (default 1).
SampleScheme parse_samples(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() < 2 || parts.size() > 3) throw UsageError("--samples expects lo:hi[:step], got '" + s + "'");
  SampleScheme out;
  try {
    const int lo = std::stoi(parts[0]), hi = std::stoi(parts[1]);
    if (lo > hi) throw UsageError("--samples: lo exceeds hi");
    out.offsets.clear();
    for (int k = lo; k <= hi; ++k) out.offsets.push_back(k);
    if (parts.size() == 3) out.step = std::stod(parts[2]);
  } catch (const std::logic_error&) {
    throw UsageError("--samples expects lo:hi[:step], got '" + s + "'");
  }
  validate(out);
  return out;
}

/// Loads the scene file and applies --samples, --m and --cutoff overrides.
SceneFile load(const Options& o) {
  if (o.scene.empty()) throw UsageError("--scene is required");
  SceneFile f = load_scene(o.scene);
  bool rebuild = false;
  if (!o.samples.empty()) {
    f.scheme = parse_samples(o.samples);
    rebuild = true;
  }
  if (o.m >= 0.0) {
    if (!(o.m > 0.0 && o.m < 1.0)) throw UsageError("--m must lie in (0,1)");
    f.scene.smoothness = o.m;
    rebuild = true;
  }
  if (rebuild && !f.spheres.empty()) {
    const double cutoff = f.scene.cutoff;
    f.scene = build_from_spheres(f.spheres, f.scene.smoothness, f.scheme);
    f.scene.cutoff = cutoff;
  }
  if (o.cutoff >= 0.0) f.scene.cutoff = o.cutoff;
  return f;
}

EnergyConfig energy_config(const SceneFile& f, const Options& o) {
  EnergyConfig cfg = f.energy;
  if (o.energy == "pc") cfg.term = DataTerm::pc;
  else if (o.energy == "mc") cfg.term = DataTerm::mc;
  else if (!o.energy.empty()) throw UsageError("--energy must be pc or mc");
  if (!o.weights.empty()) cfg.weighting = PixelWeighting::per_pixel;
  return cfg;
}

const Camera& camera_at(const SceneFile& f, int index) {
  if (f.cameras.empty()) throw UsageError("scene has no [camera]");
  if (index < 0 || static_cast<std::size_t>(index) >= f.cameras.size())
    throw UsageError("--camera " + std::to_string(index) + " out of range (scene has " +
                     std::to_string(f.cameras.size()) + ")");
  return f.cameras[static_cast<std::size_t>(index)];
}

void attach_weights(std::vector<View>& views, const Options& o) {
  if (o.weights.empty()) return;
  int w = 0, h = 0;
  const std::vector<double> weights = read_weights(o.weights, w, h);
  for (auto& v : views) {
    if (v.image.width != w || v.image.height != h) throw UsageError("--weights size does not match the target images");
    v.image.weights = weights;
  }
}

/// One group of views per frame: the given images are consumed camera by
/// camera. Without --frames the single frame is rendered from `reference`.
std::vector<std::vector<View>> target_frames(const SceneFile& f, const Options& o, const Scene* reference) {
  if (f.cameras.empty()) throw UsageError("scene has no [camera]");
  std::vector<std::vector<View>> frames;
  if (o.frames.empty()) {
    if (!reference) throw UsageError("--frames is required (the scene has no ground truth to render)");
    std::vector<View> views;
    for (const auto& c : f.cameras) views.push_back(View{c, render(*reference, c, {f.scheme, o.threads})});
    frames.push_back(std::move(views));
  } else {
    if (o.frames.size() % f.cameras.size() != 0)
      throw UsageError("--frames count must be a multiple of the camera count (" + std::to_string(f.cameras.size()) + ")");
    for (std::size_t i = 0; i < o.frames.size(); i += f.cameras.size()) {
      std::vector<View> views;
      for (std::size_t c = 0; c < f.cameras.size(); ++c) {
        Image img = read_image(o.frames[i + c]);
        if (img.width != f.cameras[c].width || img.height != f.cameras[c].height)
          throw UsageError(o.frames[i + c] + ": size does not match camera " + std::to_string(c));
        views.push_back(View{f.cameras[c], std::move(img)});
      }
      frames.push_back(std::move(views));
    }
  }
  for (auto& views : frames) attach_weights(views, o);
  return frames;
}

std::ostream& output(const Options& o, std::ofstream& file) {
  if (o.out.empty()) return std::cout;
  file.open(o.out);
  if (!file) throw IoError("cannot write " + o.out);
  return file;
}

// ---------------------------------------------------------------------------

int cmd_render(const Options& o) {
  const SceneFile f = load(o);
  const Camera& cam = camera_at(f, o.camera);
  if (o.out.empty()) throw UsageError("--out is required");
  write_image(o.out, render(f.scene, cam, {f.scheme, o.threads}));
  return kOk;
}

// ---------------------------------------------------------------------------

#ifdef GAUSSVIS_GRADCHECK_FAULT
constexpr bool kInjectFault = true;
#else
constexpr bool kInjectFault = false;
#endif

int cmd_gradcheck(const Options& o) {
  SceneFile f = load(o);
  if (o.count < 0) throw UsageError("--count must be >= 0");
  // Cutoff and far-pixel exclusion are discontinuous in the parameters.
  f.scene.cutoff = 0.0;
  EnergyConfig cfg = energy_config(f, o);
  cfg.exclude_far_pixels = false;
  cfg.accel_weight = 0.0;
  const EvalOptions eval{f.scheme, o.threads};

  std::function<double(std::span<const double>)> value;
  std::function<double(std::span<const double>, std::vector<double>&)> value_grad;
  std::function<std::string(std::size_t)> namer;
  std::vector<double> base;
  std::function<void(std::vector<double>&, std::mt19937_64&)> perturb;
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<View> views;
  if (f.mapping) {
    PoseParams p = *f.mapping;
    base = f.track.truth.empty() ? p.values : f.track.truth;
    p.values = base;
    const Scene reference = apply_mapping(p, f.scene);
    views = target_frames(f, o, &reference).front();
    auto obj = std::make_shared<PoseObjective>(f.scene, *f.mapping, views, cfg, eval);
    value = [obj](std::span<const double> t) { return obj->value(t); };
    value_grad = [obj](std::span<const double> t, std::vector<double>& g) { return obj->value_and_gradient(t, g); };
    namer = [](std::size_t i) { return "theta" + std::to_string(i); };
    perturb = [&](std::vector<double>& x, std::mt19937_64& rng) {
      for (auto& v : x) v += 0.05 * normal(rng);
    };
  } else {
    views = target_frames(f, o, &f.scene).front();
    base = scene_parameters(f.scene);
    const Scene templ = f.scene;
    value = [=](std::span<const double> g) { return data_term(with_scene_parameters(templ, g), views, cfg, false, eval).value; };
    value_grad = [=](std::span<const double> g, std::vector<double>& out) {
      const DataTermResult r = data_term(with_scene_parameters(templ, g), views, cfg, true, eval);
      out = r.gradient.flatten();
      return r.value;
    };
    namer = scene_field_name;
    perturb = [&](std::vector<double>& x, std::mt19937_64& rng) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t field = i % kFieldsPerGaussian;
        if (field == 0 || field == 4) x[i] *= std::exp(0.05 * normal(rng));
        else if (field >= 5) x[i] = std::clamp(x[i] + 0.05 * normal(rng), 0.01, 0.99);
        else x[i] += 0.05 * normal(rng);
      }
    };
  }
  const std::size_t dim = base.size();
  if (dim == 0 && o.count > 0) throw UsageError("scene has no parameters to check");

  // Components cycle through a seeded permutation so every block is hit
  // once count >= dim.
  std::mt19937_64 rng(o.seed);
  std::vector<std::size_t> order(dim);
  for (std::size_t i = 0; i < dim; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  FdReport report;
  for (int c = 0; c < o.count; ++c) {
    std::vector<double> x = base;
    perturb(x, rng);
    std::vector<double> g;
    value_grad(x, g);
    if (kInjectFault) {
      const std::size_t block = f.mapping ? std::min<std::size_t>(3, dim) : std::min<std::size_t>(kFieldsPerGaussian, dim);
      for (std::size_t i = 0; i < block; ++i) g[i] *= 1.5;
    }
    FdOptions fo;
    fo.components = {order[static_cast<std::size_t>(c) % dim]};
    fo.namer = namer;
    const FdReport r = fd_check(value, g, x, fo);
    report.entries.insert(report.entries.end(), r.entries.begin(), r.entries.end());
    report.has_nan = report.has_nan || r.has_nan;
  }

  std::ofstream file;
  output(o, file) << report.table();
  if (report.passes(1e-4)) {
    std::cerr << "gradcheck: " << report.entries.size() << " checks passed\n";
    return kOk;
  }
  const FdEntry* w = report.worst();
  std::cerr << "gradcheck: FAILED; worst " << (w->name.empty() ? std::to_string(w->index) : w->name)
            << " analytic " << fmt(w->analytic) << " numeric " << fmt(w->numeric) << " rel_error " << fmt(w->rel_error)
            << "\n";
  return kFailure;
}

// ---------------------------------------------------------------------------

int cmd_calibrate(const Options& o) {
  const double m = o.m < 0.0 ? 0.1 : o.m;
  const SampleScheme scheme = o.samples.empty() ? SampleScheme{} : parse_samples(o.samples);
  const CalibrationResult c = calibrate_sphere(o.radius.value_or(1.0), m, scheme);
  std::ofstream file;
  output(o, file) << "radius,m,magnitude,sigma,center_residual,inflection_residual,iterations\n"
                  << fmt(c.radius) << ',' << fmt(c.smoothness) << ',' << fmt(c.magnitude) << ',' << fmt(c.sigma) << ','
                  << fmt(c.center_residual) << ',' << fmt(c.inflection_residual) << ',' << c.iterations << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// Tracking

/// Per-object pose error against the ground truth: mean Gaussian-center
/// distance, minimized over the rotations that map the object's template
/// onto itself, in units of the object's extent.
class PoseScorer {
 public:
  PoseScorer(const SceneFile& f, const PoseParams& p) : templ_(f.scene), mapping_(p) {
    for (const auto& obj : p.objects) {
      Vec3 centroid = Vec3::Zero();
      for (std::size_t q : obj.gaussians) centroid += templ_.gaussians[q].center;
      centroid /= static_cast<double>(obj.gaussians.size());
      Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
      double rmax = 0.0;
      for (std::size_t q : obj.gaussians) {
        lo = lo.cwiseMin(templ_.gaussians[q].center);
        hi = hi.cwiseMax(templ_.gaussians[q].center);
        rmax = std::max(rmax, f.spheres.empty() ? 2.0 * templ_.gaussians[q].sigma : f.spheres[q].radius);
      }
      scale_.push_back((hi - lo).maxCoeff() + 2.0 * rmax);
      // Template self-symmetries among the 24 axis-aligned rotations.
      std::vector<std::vector<std::size_t>> perms;
      if (obj.kind == ObjectKind::rigid) {
        for (const Mat3& s : axis_rotations()) {
          std::vector<std::size_t> perm;
          for (std::size_t q : obj.gaussians) {
            const Vec3 moved = centroid + s * (templ_.gaussians[q].center - centroid);
            for (std::size_t r : obj.gaussians)
              if ((templ_.gaussians[r].center - moved).norm() < 1e-9 * scale_.back() &&
                  templ_.gaussians[r].albedo == templ_.gaussians[q].albedo) {
                perm.push_back(r);
                break;
              }
          }
          if (perm.size() == obj.gaussians.size()) perms.push_back(std::move(perm));
        }
      }
      if (perms.empty()) perms.push_back(obj.gaussians);
      perms_.push_back(std::move(perms));
    }
  }

  std::vector<double> errors(std::span<const double> theta, std::span<const double> truth) const {
    PoseParams p = mapping_;
    p.values.assign(theta.begin(), theta.end());
    const Scene est = apply_mapping(p, templ_);
    p.values.assign(truth.begin(), truth.end());
    const Scene ref = apply_mapping(p, templ_);
    std::vector<double> out;
    for (std::size_t o = 0; o < mapping_.objects.size(); ++o) {
      const auto& gs = mapping_.objects[o].gaussians;
      double best = 1e300;
      for (const auto& perm : perms_[o]) {
        double sum = 0.0;
        for (std::size_t i = 0; i < gs.size(); ++i) sum += (est.gaussians[perm[i]].center - ref.gaussians[gs[i]].center).norm();
        best = std::min(best, sum / static_cast<double>(gs.size()));
      }
      out.push_back(best / scale_[o]);
    }
    return out;
  }

 private:
  static std::vector<Mat3> axis_rotations() {
    std::vector<Mat3> out;
    const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (const auto& pm : perms)
      for (int signs = 0; signs < 8; ++signs) {
        Mat3 m = Mat3::Zero();
        for (int r = 0; r < 3; ++r) m(r, pm[r]) = (signs >> r & 1) ? -1.0 : 1.0;
        if (m.determinant() > 0.0) out.push_back(m);
      }
    return out;
  }

  Scene templ_;
  PoseParams mapping_;
  std::vector<double> scale_;
  std::vector<std::vector<std::vector<std::size_t>>> perms_;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

/// Random init: uniform in [init_lo, init_hi] when given; otherwise
/// translations within +-0.5 of the truth and rotations uniform over the
/// axis-angle ball of radius pi.
std::vector<double> random_init(const SceneFile& f, const PoseParams& p, std::mt19937_64& rng) {
  const auto& t = f.track;
  std::vector<double> th(t.truth.size());
  if (!t.init_lo.empty() && !t.init_hi.empty()) {
    for (std::size_t i = 0; i < th.size(); ++i) th[i] = uniform(rng, t.init_lo[i], t.init_hi[i]);
    return th;
  }
  std::vector<std::size_t> rotations;
  std::size_t at = 0;
  for (const auto& obj : p.objects) {
    for (int i = 0; i < 3; ++i) th[at + i] = t.truth[at + i] + uniform(rng, -0.5, 0.5);
    if (obj.kind == ObjectKind::rigid) rotations.push_back(at + 3);
    at += arity(obj.kind);
  }
  for (std::size_t r : rotations) {
    const double z = uniform(rng, -1.0, 1.0), phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double len = std::numbers::pi * std::cbrt(uniform(rng, 0.0, 1.0));
    th[r] = len * rho * std::cos(phi);
    th[r + 1] = len * rho * std::sin(phi);
    th[r + 2] = len * z;
  }
  return th;
}

int cmd_track(const Options& o) {
  const SceneFile f = load(o);
  if (!f.mapping) throw UsageError("track needs a [mapping] section");
  const PoseParams& mapping = *f.mapping;
  const EnergyConfig cfg = energy_config(f, o);
  const EvalOptions eval{f.scheme, o.threads};
  const bool have_truth = !f.track.truth.empty();
  std::optional<Scene> reference;
  if (have_truth) {
    PoseParams p = mapping;
    p.values = f.track.truth;
    reference = apply_mapping(p, f.scene);
  }
  const auto frames = target_frames(f, o, reference ? &*reference : nullptr);
  std::ofstream file;

  if (o.inits >= 0) {
    if (mapping.mapping != MappingKind::rigid_multi_object || !have_truth)
      throw UsageError("batch mode (--inits) needs a rigid mapping and track.truth");
    const PoseScorer scorer(f, mapping);
    const PoseObjective obj(f.scene, mapping, frames.front(), cfg, eval);
    std::ostream& os = output(o, file);
    os << "init,iterations,energy,reason";
    for (std::size_t k = 0; k < mapping.objects.size(); ++k) os << ",error" << k;
    os << ",success\n";
    std::mt19937_64 rng(o.seed);
    int successes = 0;
    std::vector<double> sums(mapping.objects.size(), 0.0);
    bool aborted = false;
    for (int i = 0; i < o.inits; ++i) {
      const OptimResult r = minimize(make_objective(obj), random_init(f, mapping, rng), f.optimizer);
      const auto e = scorer.errors(r.theta, f.track.truth);
      const bool ok = std::all_of(e.begin(), e.end(), [](double v) { return v <= 0.1; });
      aborted = aborted || r.aborted();
      os << i << ',' << r.trace.records.back().iteration << ',' << fmt(r.energy) << ',' << to_string(r.trace.reason);
      for (double v : e) os << ',' << fmt(v);
      os << ',' << (ok ? 1 : 0) << '\n';
      if (ok) {
        ++successes;
        for (std::size_t k = 0; k < e.size(); ++k) sums[k] += e[k];
      }
    }
    std::cout << "success " << successes << "/" << o.inits << " fraction "
              << fmt(o.inits ? static_cast<double>(successes) / o.inits : 0.0);
    for (std::size_t k = 0; k < sums.size(); ++k)
      std::cout << " mean_error" << k << ' ' << fmt(successes ? sums[k] / successes : 0.0);
    std::cout << '\n';
    return aborted ? kFailure : kOk;
  }

  std::vector<PoseObjective> objectives;
  for (const auto& views : frames) objectives.emplace_back(f.scene, mapping, views, cfg, eval);
  const std::vector<double> init = f.track.inits.empty() ? mapping.values : f.track.inits.front();
  const auto results = track_sequence(objectives, init, f.optimizer);

  std::ostream& os = output(o, file);
  os << "frame,energy,reason";
  for (std::size_t i = 0; i < init.size(); ++i) os << ",theta" << i;
  os << '\n';
  bool aborted = false;
  for (std::size_t t = 0; t < results.size(); ++t) {
    const auto& r = results[t];
    aborted = aborted || r.aborted();
    os << t << ',' << fmt(r.energy) << ',' << to_string(r.trace.reason);
    for (double v : r.theta) os << ',' << fmt(v);
    os << '\n';
    if (r.aborted()) std::cerr << "track: frame " << t << " aborted (non-finite energy)\n";
  }
  if (!o.trace.empty()) {
    std::ofstream tr(o.trace);
    if (!tr) throw IoError("cannot write " + o.trace);
    for (std::size_t t = 0; t < results.size(); ++t) {
      tr << "# frame " << t << '\n';
      results[t].trace.write_csv(tr);
    }
  }
  if (have_truth && frames.size() == 1) {
    const auto e = PoseScorer(f, mapping).errors(results.front().theta, f.track.truth);
    std::cout << "error";
    for (double v : e) std::cout << ' ' << fmt(v);
    std::cout << '\n';
  }
  return aborted ? kFailure : kOk;
}

// ---------------------------------------------------------------------------

int cmd_shape(const Options& o) {
  SceneFile f = load(o);
  if (o.out.empty()) throw UsageError("--out is required");
  const int seeds = o.inits < 0 ? 200 : o.inits;
  f.mapping.reset();
  f.track = {};
  if (seeds == 0) {
    std::cerr << "shape: warning: 0 seed Gaussians; writing an empty scene\n";
    f.spheres.clear();
    f.scene.gaussians.clear();
    detail::write_file(o.out, serialize_scene(f));
    return kOk;
  }
  if (o.frames.size() != f.cameras.size())
    throw UsageError("--frames needs one silhouette per camera (" + std::to_string(f.cameras.size()) + ")");
  if (!o.colors.empty() && o.colors.size() != f.cameras.size())
    throw UsageError("--colors needs one image per camera");
  const auto [lo, hi] = o.range.empty() ? std::pair{-1.0, 1.0} : parse_range(o.range);

  std::vector<View> silhouettes, colors;
  for (std::size_t c = 0; c < f.cameras.size(); ++c) {
    Image s = read_image(o.frames[c]);
    if (s.width != f.cameras[c].width || s.height != f.cameras[c].height)
      throw UsageError(o.frames[c] + ": size does not match camera " + std::to_string(c));
    if (!o.colors.empty()) {
      Image col = read_image(o.colors[c]);
      if (col.width != s.width || col.height != s.height) throw UsageError(o.colors[c] + ": size mismatch");
      col.weights.resize(col.size());
      for (std::size_t i = 0; i < col.size(); ++i) col.weights[i] = s.pixels[i].maxCoeff() > 0.5 ? 1.0 : 0.0;
      colors.push_back(View{f.cameras[c], std::move(col)});
    }
    silhouettes.push_back(View{f.cameras[c], std::move(s)});
  }

  std::mt19937_64 rng(o.seed);
  std::vector<SphereSpec> spheres;
  for (int i = 0; i < seeds; ++i) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = uniform(rng, lo, hi);
    spheres.push_back({p, o.radius.value_or(0.1), Vec3::Ones()});
  }
  const double cutoff = f.scene.cutoff;
  Scene seed_scene = build_from_spheres(spheres, f.scene.smoothness, f.scheme);
  seed_scene.cutoff = cutoff;

  ShapeOptions so;
  so.energy = f.energy;
  so.eval = {f.scheme, o.threads};
  const ShapeResult r = estimate_shape(seed_scene, silhouettes, colors, so);
  std::cout << "energy " << fmt(r.initial_energy) << " -> " << fmt(r.optim.energy) << " ("
            << to_string(r.optim.trace.reason) << ", " << r.optim.trace.records.back().iteration << " iterations)\n";
  if (!r.albedo.flagged.empty()) std::cerr << "shape: " << r.albedo.flagged.size() << " Gaussians unseen in color views\n";
  if (!o.trace.empty()) {
    std::ofstream tr(o.trace);
    if (!tr) throw IoError("cannot write " + o.trace);
    r.optim.trace.write_csv(tr);
  }
  f.spheres.clear();
  f.scene = r.scene;
  detail::write_file(o.out, serialize_scene(f));
  return r.optim.aborted() ? kFailure : kOk;
}

// ---------------------------------------------------------------------------

int cmd_sweep(const Options& o) {
  const SceneFile f = load(o);
  if (o.param.empty()) throw UsageError("--param is required");
  if (o.range.empty()) throw UsageError("--range is required");
  if (o.steps < 2) throw UsageError("--steps must be >= 2");
  const auto [lo, hi] = parse_range(o.range);
  EnergyConfig cfg = energy_config(f, o);
  const EvalOptions eval{f.scheme, o.threads};

  std::optional<std::size_t> theta_index, field;
  if (o.param.rfind("theta", 0) == 0 && o.param.size() > 5 &&
      std::all_of(o.param.begin() + 5, o.param.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    if (!f.mapping) throw UsageError("invalid parameter id '" + o.param + "': scene has no [mapping]");
    theta_index = std::stoul(o.param.substr(5));
    if (*theta_index >= f.mapping->values.size())
      throw UsageError("invalid parameter id '" + o.param + "': mapping has " + std::to_string(f.mapping->values.size()) + " parameters");
  } else {
    field = parse_scene_field(o.param);
    if (!field || *field >= f.scene.size() * kFieldsPerGaussian)
      throw UsageError("invalid parameter id '" + o.param + "' (expected theta<i> or g<q>.<c|mu.x|mu.y|mu.z|sigma|a.r|a.g|a.b>)");
  }

  Scene reference = f.scene;
  std::vector<double> theta;
  if (f.mapping) {
    PoseParams p = *f.mapping;
    theta = p.values;
    if (!f.track.truth.empty()) p.values = f.track.truth;
    reference = apply_mapping(p, f.scene);
  }
  const std::vector<View> views = target_frames(f, o, &reference).front();
  const Camera& cam = views.front().camera;
  const Ray center = pixel_ray(cam, cam.width / 2, cam.height / 2);

  std::ofstream file;
  std::ostream& os = output(o, file);
  os << (field ? "value,energy,visibility\n" : "value,energy\n");
  std::optional<PoseObjective> obj;
  if (theta_index) obj.emplace(f.scene, *f.mapping, views, cfg, eval);
  const Scene base = f.mapping ? apply_mapping(*f.mapping, f.scene) : f.scene;
  const std::vector<double> gamma0 = scene_parameters(base);
  for (int i = 0; i < o.steps; ++i) {
    const double v = i == o.steps - 1 ? hi : lo + (hi - lo) * i / (o.steps - 1);
    if (theta_index) {
      std::vector<double> t = theta;
      t[*theta_index] = v;
      os << fmt(v) << ',' << fmt(obj->value(t)) << '\n';
      continue;
    }
    std::vector<double> g = gamma0;
    g[*field] = v;
    const Scene s = with_scene_parameters(base, g);
    validate(s);
    const double e = data_term(s, views, cfg, false, eval).value;
    const std::size_t q = *field / kFieldsPerGaussian;
    const auto projected = project_scene(s, center, s.cutoff);
    double vis = 0.0;
    for (std::size_t k = 0; k < projected.size(); ++k)
      if (projected[k].source_index == q) vis = gaussian_visibility(projected, k, f.scheme);
    os << fmt(v) << ',' << fmt(e) << ',' << fmt(vis) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable rendering and pose/shape estimation with translucent Gaussians"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--scene", o.scene, "Scene file");
    c->add_option("--m", o.m, "Override the scene smoothness m in (0,1); sphere scenes are recalibrated");
    c->add_option("--cutoff", o.cutoff, "Override the Gaussian cutoff distance (0 disables)");
    c->add_option("--samples", o.samples, "Sample scheme lo:hi[:step], e.g. -4:0:1");
    c->add_option("--threads", o.threads, "Worker threads (0: hardware concurrency)");
  };
  auto energy = [&](CLI::App* c) {
    c->add_option("--energy", o.energy, "Data term: pc or mc")->check(CLI::IsMember({"pc", "mc"}));
    c->add_option("--frames", o.frames, "Target images, one per camera per frame")->delimiter(',');
    c->add_option("--weights", o.weights, "Per-pixel weights (grayscale PFM) applied to every target");
  };

  auto* render_cmd = app.add_subcommand("render", "Render a scene through one of its cameras");
  common(render_cmd);
  render_cmd->add_option("--camera", o.camera, "Camera index");
  render_cmd->add_option("--out", o.out, "Output image (.pfm or .ppm)");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  common(grad_cmd);
  energy(grad_cmd);
  grad_cmd->add_option("--seed", o.seed, "Random seed");
  grad_cmd->add_option("--count", o.count, "Number of random checks");
  grad_cmd->add_option("--out", o.out, "Report file (default stdout)");

  auto* cal_cmd = app.add_subcommand("calibrate", "Calibrate a Gaussian to a sphere of given radius");
  cal_cmd->add_option("--m", o.m, "Smoothness m in (0,1)");
  cal_cmd->add_option("--radius", o.radius, "Sphere radius (default 1)");
  cal_cmd->add_option("--samples", o.samples, "Sample scheme lo:hi[:step]");
  cal_cmd->add_option("--out", o.out, "CSV file (default stdout)");

  auto* track_cmd = app.add_subcommand("track", "Estimate object poses per frame");
  common(track_cmd);
  energy(track_cmd);
  track_cmd->add_option("--inits", o.inits, "Batch mode: number of random initializations");
  track_cmd->add_option("--seed", o.seed, "Random seed for batch mode");
  track_cmd->add_option("--out", o.out, "Pose CSV (default stdout)");
  track_cmd->add_option("--trace", o.trace, "Optimizer trace CSV");

  auto* shape_cmd = app.add_subcommand("shape", "Fit free Gaussians to silhouettes and back-project albedo");
  common(shape_cmd);
  shape_cmd->add_option("--frames", o.frames, "Silhouette images, one per camera")->delimiter(',');
  shape_cmd->add_option("--colors", o.colors, "Color images, one per camera")->delimiter(',');
  shape_cmd->add_option("--inits", o.inits, "Number of seed Gaussians (default 200)");
  shape_cmd->add_option("--radius", o.radius, "Seed sphere radius (default 0.1)");
  shape_cmd->add_option("--range", o.range, "Seed volume lo:hi on every axis (default -1:1)");
  shape_cmd->add_option("--seed", o.seed, "Random seed");
  shape_cmd->add_option("--out", o.out, "Output scene file");
  shape_cmd->add_option("--trace", o.trace, "Optimizer trace CSV");

  auto* sweep_cmd = app.add_subcommand("sweep", "Energy along one parameter");
  common(sweep_cmd);
  energy(sweep_cmd);
  sweep_cmd->add_option("--param", o.param, "theta<i> or g<q>.<field>");
  sweep_cmd->add_option("--range", o.range, "lo:hi");
  sweep_cmd->add_option("--steps", o.steps, "Number of samples (>= 2)");
  sweep_cmd->add_option("--out", o.out, "CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (render_cmd->parsed()) return cmd_render(o);
    if (grad_cmd->parsed()) return cmd_gradcheck(o);
    if (cal_cmd->parsed()) return cmd_calibrate(o);
    if (track_cmd->parsed()) return cmd_track(o);
    if (shape_cmd->parsed()) return cmd_shape(o);
    if (sweep_cmd->parsed()) return cmd_sweep(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << o.scene << ": " << e.what() << '\n';
    return kUsage;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
