#include "dhc/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include <json.hpp>

#include "dhc/parallel.hpp"
#include "dhc/rng.hpp"

namespace dhc {

namespace {

// RNG stream ids; keyed per (seed, sample index, stream).
constexpr std::uint64_t kStreamGeometry = 101;
constexpr std::uint64_t kStreamNoise = 102;

struct Primitive {
  ShapeKind kind = ShapeKind::sphere;
  double cz = 0, cy = 0, cx = 0;
  double az = 0, ay = 0, ax = 0;  // semi-extent per axis (radius / half-side / semi-axes)

  bool contains(int z, int y, int x) const {
    const double dz = (z - cz) / az;
    const double dy = (y - cy) / ay;
    const double dx = (x - cx) / ax;
    if (kind == ShapeKind::box) {
      return std::abs(dz) <= 1.0 && std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
    }
    return dz * dz + dy * dy + dx * dx <= 1.0;  // sphere and ellipsoid
  }

  double bounding_radius() const { return std::max({az, ay, ax}); }
};

std::int64_t count_inside(const Primitive& p, const Dims3& dims) {
  const int z0 = std::max(0, static_cast<int>(std::floor(p.cz - p.az)));
  const int z1 = std::min(dims.d - 1, static_cast<int>(std::ceil(p.cz + p.az)));
  const int y0 = std::max(0, static_cast<int>(std::floor(p.cy - p.ay)));
  const int y1 = std::min(dims.h - 1, static_cast<int>(std::ceil(p.cy + p.ay)));
  const int x0 = std::max(0, static_cast<int>(std::floor(p.cx - p.ax)));
  const int x1 = std::min(dims.w - 1, static_cast<int>(std::ceil(p.cx + p.ax)));
  std::int64_t n = 0;
  for (int z = z0; z <= z1; ++z)
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (p.contains(z, y, x)) ++n;
  return n;
}

// Scale the primitive's extents so the lattice count lands near the target.
// Plain continuous-volume radii can miss small targets badly, so a short
// bisection on the scale factor follows the analytic initial guess.
void calibrate(Primitive& p, const Dims3& dims, std::int64_t target) {
  double lo = 0.5, hi = 2.0;
  const Primitive base = p;
  auto scaled_count = [&](double s) {
    Primitive q = base;
    q.az *= s;
    q.ay *= s;
    q.ax *= s;
    return count_inside(q, dims);
  };
  if (scaled_count(lo) > target) {
    hi = lo;
    lo = 0.05;
  } else if (scaled_count(hi) < target) {
    lo = hi;
    hi = 8.0;
  }
  double best_scale = 1.0;
  std::int64_t best_err = std::abs(count_inside(p, dims) - target);
  for (int iter = 0; iter < 24; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const std::int64_t n = scaled_count(mid);
    if (std::abs(n - target) < best_err) {
      best_err = std::abs(n - target);
      best_scale = mid;
    }
    if (n < target) {
      lo = mid;
    } else if (n > target) {
      hi = mid;
    } else {
      break;
    }
  }
  p.az *= best_scale;
  p.ay *= best_scale;
  p.ax *= best_scale;
}

}  // namespace

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::box: return "box";
    case ShapeKind::ellipsoid: return "ellipsoid";
  }
  fail(Errc::invalid_argument, "unknown shape kind");
}

ShapeKind shape_kind_from_string(const std::string& name) {
  if (name == "sphere") return ShapeKind::sphere;
  if (name == "box") return ShapeKind::box;
  if (name == "ellipsoid") return ShapeKind::ellipsoid;
  fail(Errc::invalid_argument, "unknown shape kind: " + name);
}

void PhantomSpec::validate() const {
  if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0) {
    fail(Errc::invalid_argument, "phantom dims must be positive");
  }
  if (num_classes < 2) fail(Errc::invalid_argument, "phantom needs >= 2 classes");
  const auto k = static_cast<std::size_t>(num_classes);
  if (target_fractions.size() != k || shape_kinds.size() != k || intensity_means.size() != k) {
    fail(Errc::invalid_argument, "per-class vectors must have length num_classes");
  }
  double sum = 0.0;
  for (double f : target_fractions) {
    if (!(f >= 0.0)) fail(Errc::invalid_argument, "fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-6) fail(Errc::invalid_argument, "fractions must sum to 1");
  for (std::size_t i = 1; i < k; ++i) {
    if (target_fractions[i] > target_fractions[0]) {
      fail(Errc::invalid_argument, "background fraction must be the largest");
    }
  }
  if (!(noise_sigma >= 0.0)) fail(Errc::invalid_argument, "noise_sigma must be >= 0");
}

LabeledSample generate_phantom(const PhantomSpec& spec, int index) {
  spec.validate();
  const Dims3 dims = spec.dims;
  const std::int64_t n = dims.voxels();

  CounterRng geom(spec.seed, static_cast<std::uint64_t>(index), kStreamGeometry);

  std::vector<Primitive> placed;
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(n), 0);

  for (int cls = 1; cls < spec.num_classes; ++cls) {
    const double frac = spec.target_fractions[static_cast<std::size_t>(cls)];
    if (frac == 0.0) continue;
    const double target_voxels = frac * static_cast<double>(n);
    if (target_voxels < 1.0) {
      fail(Errc::class_too_small, "class too small for grid");
    }
    const std::int64_t target = std::llround(target_voxels);

    Primitive p;
    p.kind = spec.shape_kinds[static_cast<std::size_t>(cls)];
    switch (p.kind) {
      case ShapeKind::sphere: {
        const double r = std::cbrt(3.0 * target_voxels / (4.0 * std::numbers::pi));
        p.az = p.ay = p.ax = r;
        break;
      }
      case ShapeKind::box: {
        const double half = 0.5 * std::cbrt(target_voxels);
        p.az = p.ay = p.ax = half;
        break;
      }
      case ShapeKind::ellipsoid: {
        const double r = std::cbrt(3.0 * target_voxels / (4.0 * std::numbers::pi));
        // Random aspect with the product of the axis factors fixed at 1.
        const double fz = geom.next_uniform(0.6, 1.6);
        const double fy = geom.next_uniform(0.6, 1.6);
        p.az = r * fz;
        p.ay = r * fy;
        p.ax = r / (fz * fy);
        break;
      }
    }

    // Rejection-sample a center clear of earlier primitives; fall back to
    // overlap after enough attempts (overlaps are carved by later classes).
    const double rb = p.bounding_radius();
    auto margin = [&](int dim) {
      const double m = std::min(rb, 0.5 * (dim - 1));
      return std::pair<double, double>{m, (dim - 1) - m};
    };
    const auto [z_lo, z_hi] = margin(dims.d);
    const auto [y_lo, y_hi] = margin(dims.h);
    const auto [x_lo, x_hi] = margin(dims.w);
    for (int attempt = 0; attempt < 64; ++attempt) {
      p.cz = geom.next_uniform(z_lo, z_hi);
      p.cy = geom.next_uniform(y_lo, y_hi);
      p.cx = geom.next_uniform(x_lo, x_hi);
      bool clear = true;
      for (const Primitive& q : placed) {
        const double dz = p.cz - q.cz, dy = p.cy - q.cy, dx = p.cx - q.cx;
        const double dist = std::sqrt(dz * dz + dy * dy + dx * dx);
        if (dist < rb + q.bounding_radius()) {
          clear = false;
          break;
        }
      }
      if (clear) break;
    }

    calibrate(p, dims, target);
    if (count_inside(p, dims) < 1) fail(Errc::class_too_small, "class too small for grid");
    placed.push_back(p);

    const int z0 = std::max(0, static_cast<int>(std::floor(p.cz - p.az)));
    const int z1 = std::min(dims.d - 1, static_cast<int>(std::ceil(p.cz + p.az)));
    const int y0 = std::max(0, static_cast<int>(std::floor(p.cy - p.ay)));
    const int y1 = std::min(dims.h - 1, static_cast<int>(std::ceil(p.cy + p.ay)));
    const int x0 = std::max(0, static_cast<int>(std::floor(p.cx - p.ax)));
    const int x1 = std::min(dims.w - 1, static_cast<int>(std::ceil(p.cx + p.ax)));
    for (int z = z0; z <= z1; ++z)
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
          if (p.contains(z, y, x)) {
            labels[(static_cast<std::size_t>(z) * dims.h + y) * dims.w + x] =
                static_cast<std::uint8_t>(cls);
          }
  }

  CounterRng noise(spec.seed, static_cast<std::uint64_t>(index), kStreamNoise);
  std::vector<float> intensities(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double mean = spec.intensity_means[labels[static_cast<std::size_t>(i)]];
    const double noise_term = spec.noise_sigma > 0.0 ? spec.noise_sigma * noise.next_gaussian() : 0.0;
    intensities[static_cast<std::size_t>(i)] = static_cast<float>(mean + noise_term);
  }

  return LabeledSample{Volume(dims, std::move(intensities), spec.spacing),
                       LabelMap(dims, spec.num_classes, std::move(labels))};
}

Dataset make_dataset(const PhantomSpec& spec, int n_labeled, int n_unlabeled) {
  if (n_labeled < 1 || n_unlabeled < 1) {
    fail(Errc::invalid_argument, "dataset needs at least 1 labeled and 1 unlabeled sample");
  }
  const int total = n_labeled + n_unlabeled;
  std::vector<std::optional<LabeledSample>> samples(static_cast<std::size_t>(total));
  parallel_for_indexed(total, [&](std::int64_t i) {
    samples[static_cast<std::size_t>(i)] = generate_phantom(spec, static_cast<int>(i));
  });

  Dataset ds{.labeled = {}, .unlabeled = {}, .unlabeled_gt = {}, .spec = spec};
  for (int i = 0; i < n_labeled; ++i) {
    ds.labeled.push_back(std::move(*samples[static_cast<std::size_t>(i)]));
  }
  for (int i = n_labeled; i < total; ++i) {
    ds.unlabeled.push_back(std::move(samples[static_cast<std::size_t>(i)]->volume));
    ds.unlabeled_gt.push_back(std::move(samples[static_cast<std::size_t>(i)]->labels));
  }
  return ds;
}

double imbalance_ratio(const LabelMap& labels) {
  const auto counts = class_voxel_counts(labels, labels.num_classes());
  std::int64_t max_count = 0;
  std::int64_t min_nonzero = 0;
  for (std::int64_t c : counts) {
    max_count = std::max(max_count, c);
    if (c > 0 && (min_nonzero == 0 || c < min_nonzero)) min_nonzero = c;
  }
  if (min_nonzero == 0) return 0.0;
  return static_cast<double>(max_count) / static_cast<double>(min_nonzero);
}

PhantomSpec parse_phantom_spec_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::bad_header, std::string("invalid phantom spec JSON: ") + e.what());
  }
  PhantomSpec spec;
  try {
    spec.dims = {j.at("dims").at(0).get<int>(), j.at("dims").at(1).get<int>(),
                 j.at("dims").at(2).get<int>()};
    spec.num_classes = j.at("num_classes").get<int>();
    spec.target_fractions = j.at("target_fractions").get<std::vector<double>>();
    spec.intensity_means = j.at("intensity_means").get<std::vector<double>>();
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("shape_kinds")) {
      const std::string name = s.get<std::string>();
      // Entry 0 describes background; accept any tag there.
      spec.shape_kinds.push_back(
          (spec.shape_kinds.empty() && (name == "background" || name == "none"))
              ? ShapeKind::sphere
              : shape_kind_from_string(name));
    }
    if (j.contains("spacing")) {
      spec.spacing = {j.at("spacing").at(0).get<float>(), j.at("spacing").at(1).get<float>(),
                      j.at("spacing").at(2).get<float>()};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::bad_header, std::string("phantom spec missing fields: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string phantom_spec_to_json(const PhantomSpec& spec) {
  nlohmann::json j;
  j["dims"] = {spec.dims.d, spec.dims.h, spec.dims.w};
  j["num_classes"] = spec.num_classes;
  j["target_fractions"] = spec.target_fractions;
  std::vector<std::string> kinds;
  kinds.reserve(spec.shape_kinds.size());
  for (std::size_t i = 0; i < spec.shape_kinds.size(); ++i) {
    kinds.push_back(i == 0 ? "background" : to_string(spec.shape_kinds[i]));
  }
  j["shape_kinds"] = kinds;
  j["intensity_means"] = spec.intensity_means;
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;
  j["spacing"] = {spec.spacing.z, spec.spacing.y, spec.spacing.x};
  return j.dump(2);
}

}  // namespace dhc
