#include "dhc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dhc/cotrain.hpp"
#include "dhc/parallel.hpp"

namespace dhc {

namespace {

void check_same_grid(const LabelMap& a, const LabelMap& b) {
  if (a.dims() != b.dims()) fail(Errc::shape_mismatch, "label map dims mismatch");
}

// 1D lower-envelope pass of the squared distance transform; w is the
// squared sample pitch along this axis. Infinite samples contribute no
// parabola, so no arithmetic ever touches infinity.
void edt_pass_1d(std::span<const double> f, std::span<double> d, std::span<int> v,
                 std::span<double> z, double w) {
  const int n = static_cast<int>(f.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[static_cast<std::size_t>(q)] == kInf) continue;
    double s = 0.0;
    while (k >= 0) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[static_cast<std::size_t>(q)] + w * q * q) -
           (f[static_cast<std::size_t>(p)] + w * p * p)) /
          (2.0 * w * (q - p));
      if (s > z[static_cast<std::size_t>(k)]) break;
      --k;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = (k == 0) ? -kInf : s;
    z[static_cast<std::size_t>(k + 1)] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j + 1)] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    const double dq = q - p;
    d[static_cast<std::size_t>(q)] = w * dq * dq + f[static_cast<std::size_t>(p)];
  }
}

}  // namespace

std::optional<double> dice_score(const LabelMap& pred, const LabelMap& gt, int cls) {
  check_same_grid(pred, gt);
  const auto p = pred.data();
  const auto g = gt.data();
  std::int64_t np = 0, ng = 0, inter = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool in_p = p[i] == cls;
    const bool in_g = g[i] == cls;
    np += in_p;
    ng += in_g;
    inter += in_p && in_g;
  }
  if (np == 0 && ng == 0) return std::nullopt;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

std::vector<std::int64_t> boundary_voxels(const LabelMap& mask, int cls) {
  const Dims3 dims = mask.dims();
  const auto data = mask.data();
  std::vector<std::int64_t> out;
  std::int64_t i = 0;
  for (int z = 0; z < dims.d; ++z) {
    for (int y = 0; y < dims.h; ++y) {
      for (int x = 0; x < dims.w; ++x, ++i) {
        if (data[static_cast<std::size_t>(i)] != cls) continue;
        const bool border = z == 0 || z == dims.d - 1 || y == 0 || y == dims.h - 1 || x == 0 ||
                            x == dims.w - 1;
        bool is_boundary = border;
        if (!is_boundary) {
          const std::int64_t sy = dims.w;
          const std::int64_t sz = static_cast<std::int64_t>(dims.h) * dims.w;
          is_boundary = data[static_cast<std::size_t>(i - 1)] != cls ||
                        data[static_cast<std::size_t>(i + 1)] != cls ||
                        data[static_cast<std::size_t>(i - sy)] != cls ||
                        data[static_cast<std::size_t>(i + sy)] != cls ||
                        data[static_cast<std::size_t>(i - sz)] != cls ||
                        data[static_cast<std::size_t>(i + sz)] != cls;
        }
        if (is_boundary) out.push_back(i);
      }
    }
  }
  return out;
}

std::vector<double> squared_distance_field(std::span<const std::int64_t> seeds, const Dims3& dims,
                                           const Spacing& spacing) {
  const std::int64_t n = dims.voxels();
  std::vector<double> field(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (std::int64_t s : seeds) field[static_cast<std::size_t>(s)] = 0.0;

  const int max_axis = std::max({dims.d, dims.h, dims.w});
  std::vector<double> f(static_cast<std::size_t>(max_axis));
  std::vector<double> d(static_cast<std::size_t>(max_axis));
  std::vector<int> v(static_cast<std::size_t>(max_axis));
  std::vector<double> zbuf(static_cast<std::size_t>(max_axis + 1));

  const std::int64_t sy = dims.w;
  const std::int64_t sz = static_cast<std::int64_t>(dims.h) * dims.w;

  // Pass along z.
  const double wz = static_cast<double>(spacing.z) * spacing.z;
  for (int y = 0; y < dims.h; ++y) {
    for (int x = 0; x < dims.w; ++x) {
      const std::int64_t base = static_cast<std::int64_t>(y) * sy + x;
      for (int z = 0; z < dims.d; ++z) f[static_cast<std::size_t>(z)] = field[static_cast<std::size_t>(base + z * sz)];
      edt_pass_1d({f.data(), static_cast<std::size_t>(dims.d)}, {d.data(), static_cast<std::size_t>(dims.d)},
                  {v.data(), static_cast<std::size_t>(dims.d)}, {zbuf.data(), static_cast<std::size_t>(dims.d + 1)}, wz);
      for (int z = 0; z < dims.d; ++z) field[static_cast<std::size_t>(base + z * sz)] = d[static_cast<std::size_t>(z)];
    }
  }
  // Pass along y.
  const double wy = static_cast<double>(spacing.y) * spacing.y;
  for (int z = 0; z < dims.d; ++z) {
    for (int x = 0; x < dims.w; ++x) {
      const std::int64_t base = static_cast<std::int64_t>(z) * sz + x;
      for (int y = 0; y < dims.h; ++y) f[static_cast<std::size_t>(y)] = field[static_cast<std::size_t>(base + y * sy)];
      edt_pass_1d({f.data(), static_cast<std::size_t>(dims.h)}, {d.data(), static_cast<std::size_t>(dims.h)},
                  {v.data(), static_cast<std::size_t>(dims.h)}, {zbuf.data(), static_cast<std::size_t>(dims.h + 1)}, wy);
      for (int y = 0; y < dims.h; ++y) field[static_cast<std::size_t>(base + y * sy)] = d[static_cast<std::size_t>(y)];
    }
  }
  // Pass along x.
  const double wx = static_cast<double>(spacing.x) * spacing.x;
  for (int z = 0; z < dims.d; ++z) {
    for (int y = 0; y < dims.h; ++y) {
      const std::int64_t base = static_cast<std::int64_t>(z) * sz + static_cast<std::int64_t>(y) * sy;
      for (int x = 0; x < dims.w; ++x) f[static_cast<std::size_t>(x)] = field[static_cast<std::size_t>(base + x)];
      edt_pass_1d({f.data(), static_cast<std::size_t>(dims.w)}, {d.data(), static_cast<std::size_t>(dims.w)},
                  {v.data(), static_cast<std::size_t>(dims.w)}, {zbuf.data(), static_cast<std::size_t>(dims.w + 1)}, wx);
      for (int x = 0; x < dims.w; ++x) field[static_cast<std::size_t>(base + x)] = d[static_cast<std::size_t>(x)];
    }
  }
  return field;
}

std::optional<double> asd(const LabelMap& pred, const LabelMap& gt, int cls,
                          const Spacing& spacing) {
  check_same_grid(pred, gt);
  const auto bp = boundary_voxels(pred, cls);
  const auto bg = boundary_voxels(gt, cls);
  if (bp.empty() || bg.empty()) return std::nullopt;

  const auto dist_to_gt = squared_distance_field(bg, pred.dims(), spacing);
  const auto dist_to_pred = squared_distance_field(bp, pred.dims(), spacing);

  // Per-direction sums first so the pooled result is exactly symmetric.
  double from_pred = 0.0, from_gt = 0.0;
  for (std::int64_t i : bp) from_pred += std::sqrt(dist_to_gt[static_cast<std::size_t>(i)]);
  for (std::int64_t i : bg) from_gt += std::sqrt(dist_to_pred[static_cast<std::size_t>(i)]);
  return (from_pred + from_gt) / static_cast<double>(bp.size() + bg.size());
}

ClassReport per_volume_report(const LabelMap& pred, const LabelMap& gt, const Spacing& spacing) {
  const int num_classes = gt.num_classes();
  ClassReport report;
  report.dice.assign(static_cast<std::size_t>(num_classes), std::nullopt);
  report.asd.assign(static_cast<std::size_t>(num_classes), std::nullopt);
  double dice_sum = 0.0, asd_sum = 0.0;
  int dice_n = 0, asd_n = 0;
  for (int k = 1; k < num_classes; ++k) {
    report.dice[static_cast<std::size_t>(k)] = dice_score(pred, gt, k);
    report.asd[static_cast<std::size_t>(k)] = asd(pred, gt, k, spacing);
    if (report.dice[static_cast<std::size_t>(k)]) {
      dice_sum += *report.dice[static_cast<std::size_t>(k)];
      ++dice_n;
    }
    if (report.asd[static_cast<std::size_t>(k)]) {
      asd_sum += *report.asd[static_cast<std::size_t>(k)];
      ++asd_n;
    }
  }
  if (dice_n > 0) report.mean_dice = dice_sum / dice_n;
  if (asd_n > 0) report.mean_asd = asd_sum / asd_n;
  return report;
}

ClassReport aggregate_reports(std::span<const ClassReport> reports) {
  if (reports.empty()) fail(Errc::invalid_argument, "no reports to aggregate");
  const std::size_t num_classes = reports.front().dice.size();
  ClassReport out;
  out.dice.assign(num_classes, std::nullopt);
  out.asd.assign(num_classes, std::nullopt);
  for (std::size_t k = 1; k < num_classes; ++k) {
    double ds = 0.0, as = 0.0;
    int dn = 0, an = 0;
    for (const ClassReport& r : reports) {
      if (r.dice[k]) {
        ds += *r.dice[k];
        ++dn;
      }
      if (r.asd[k]) {
        as += *r.asd[k];
        ++an;
      }
    }
    if (dn > 0) out.dice[k] = ds / dn;
    if (an > 0) out.asd[k] = as / an;
  }
  double dice_sum = 0.0, asd_sum = 0.0;
  int dice_n = 0, asd_n = 0;
  for (std::size_t k = 1; k < num_classes; ++k) {
    if (out.dice[k]) {
      dice_sum += *out.dice[k];
      ++dice_n;
    }
    if (out.asd[k]) {
      asd_sum += *out.asd[k];
      ++asd_n;
    }
  }
  if (dice_n > 0) out.mean_dice = dice_sum / dice_n;
  if (asd_n > 0) out.mean_asd = asd_sum / asd_n;
  return out;
}

std::vector<ClassReport> evaluate(const CoTrainState& state, std::span<const Volume> volumes,
                                  std::span<const LabelMap> ground_truth) {
  if (volumes.empty() || volumes.size() != ground_truth.size()) {
    fail(Errc::invalid_argument, "evaluation set must pair volumes with ground truth");
  }
  std::vector<ClassReport> reports(volumes.size());
  parallel_for_indexed(static_cast<std::int64_t>(volumes.size()), [&](std::int64_t i) {
    const Volume& vol = volumes[static_cast<std::size_t>(i)];
    const ProbMap probs = state.cfg.eval_sliding_window
                              ? sliding_window_infer(state, vol, state.cfg.eval_window,
                                                     state.cfg.eval_stride)
                              : infer(state, vol);
    const LabelMap pred = argmax_labels(probs);
    reports[static_cast<std::size_t>(i)] =
        per_volume_report(pred, ground_truth[static_cast<std::size_t>(i)], vol.spacing());
  });
  return reports;
}

}  // namespace dhc
