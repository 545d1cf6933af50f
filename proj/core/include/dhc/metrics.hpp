#pragma once

#include <optional>
#include <span>

#include "dhc/tensor.hpp"

namespace dhc {

struct CoTrainState;

// Per-class evaluation results. Foreground classes live at indices
// 1..K-1; missing entries stay nullopt and means skip them.
struct ClassReport {
  std::vector<std::optional<double>> dice;  // length K, [0] unused
  std::vector<std::optional<double>> asd;   // length K, [0] unused
  std::optional<double> mean_dice;
  std::optional<double> mean_asd;
};

// Overlap 2|P n G| / (|P| + |G|) for class cls. Missing when both masks
// are empty; 0 when only the prediction is empty.
std::optional<double> dice_score(const LabelMap& pred, const LabelMap& gt, int cls);

// Symmetric average surface distance for class cls. Boundary voxels are
// mask voxels with a six-connected neighbor outside the mask (the volume
// border counts as outside); distances are Euclidean between voxel
// centers scaled by spacing, pooled over both boundary sets. Missing when
// either mask is empty.
std::optional<double> asd(const LabelMap& pred, const LabelMap& gt, int cls,
                          const Spacing& spacing);

// Boundary voxel indices of the class-cls mask, in raster order.
std::vector<std::int64_t> boundary_voxels(const LabelMap& mask, int cls);

// Exact squared Euclidean distance field (separable lower-envelope
// transform) to the seed set; weights are squared spacings per axis.
// Seeds are voxel indices; non-seed voxels start at infinity.
std::vector<double> squared_distance_field(std::span<const std::int64_t> seeds, const Dims3& dims,
                                           const Spacing& spacing);

ClassReport per_volume_report(const LabelMap& pred, const LabelMap& gt, const Spacing& spacing);

// Per-class means over volumes, skipping missing entries.
ClassReport aggregate_reports(std::span<const ClassReport> reports);

// Ensemble inference over an evaluation set followed by per-volume
// metrics. Uses sliding-window inference when the training config asks
// for it.
std::vector<ClassReport> evaluate(const CoTrainState& state, std::span<const Volume> volumes,
                                  std::span<const LabelMap> ground_truth);

}  // namespace dhc
