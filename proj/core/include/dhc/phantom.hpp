#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dhc/tensor.hpp"

namespace dhc {

enum class ShapeKind { sphere, box, ellipsoid };

std::string to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);

// Recipe for a family of class-imbalanced synthetic phantoms. Class 0 is
// background and must hold the largest volume fraction; foreground classes
// are geometric primitives dropped at random non-overlapping centers
// (later classes overwrite earlier ones where placement fails to avoid
// overlap). Voxel intensities are per-class means plus Gaussian noise.
struct PhantomSpec {
  Dims3 dims;
  int num_classes = 0;
  std::vector<double> target_fractions;  // length K, sums to 1, [0] largest
  std::vector<ShapeKind> shape_kinds;    // length K; entry 0 ignored
  std::vector<double> intensity_means;   // length K
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  Spacing spacing;

  void validate() const;
};

PhantomSpec parse_phantom_spec_json(const std::string& text);
std::string phantom_spec_to_json(const PhantomSpec& spec);

struct LabeledSample {
  Volume volume;
  LabelMap labels;
};

// Labeled/unlabeled split of generated phantoms. Ground truth of the
// unlabeled half is retained for evaluation only and never enters training.
struct Dataset {
  std::vector<LabeledSample> labeled;
  std::vector<Volume> unlabeled;
  std::vector<LabelMap> unlabeled_gt;
  PhantomSpec spec;
};

// Deterministic in (spec.seed, index). Foreground class voxel counts land
// within +-30% of the targets; primitives below one voxel raise
// Errc::class_too_small.
LabeledSample generate_phantom(const PhantomSpec& spec, int index);

Dataset make_dataset(const PhantomSpec& spec, int n_labeled, int n_unlabeled);

// Max class count over min nonzero class count.
double imbalance_ratio(const LabelMap& labels);

}  // namespace dhc
