#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dhc/error.hpp"

namespace dhc {

struct Dims3 {
  int d = 0, h = 0, w = 0;

  std::int64_t voxels() const {
    return static_cast<std::int64_t>(d) * h * w;
  }
  bool operator==(const Dims3&) const = default;
};

// Physical voxel size (z, y, x).
struct Spacing {
  float z = 1.0f, y = 1.0f, x = 1.0f;
  bool operator==(const Spacing&) const = default;
};

// Dense 3D scalar field, row-major (z outermost, x innermost), f32 storage.
// Immutable once constructed; construction validates shape and finiteness.
class Volume {
 public:
  Volume(Dims3 dims, Spacing spacing = {});
  Volume(Dims3 dims, std::vector<float> data, Spacing spacing = {});

  const Dims3& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const float> data() const { return data_; }
  std::int64_t voxels() const { return dims_.voxels(); }

  float at(int z, int y, int x) const {
    return data_[(static_cast<std::int64_t>(z) * dims_.h + y) * dims_.w + x];
  }

 private:
  Dims3 dims_;
  Spacing spacing_;
  std::vector<float> data_;
};

// Per-voxel class indices in [0, num_classes). u8 storage.
class LabelMap {
 public:
  LabelMap(Dims3 dims, int num_classes);
  LabelMap(Dims3 dims, int num_classes, std::vector<std::uint8_t> data);

  const Dims3& dims() const { return dims_; }
  int num_classes() const { return num_classes_; }
  std::span<const std::uint8_t> data() const { return data_; }
  std::int64_t voxels() const { return dims_.voxels(); }

  std::uint8_t at(int z, int y, int x) const {
    return data_[(static_cast<std::int64_t>(z) * dims_.h + y) * dims_.w + x];
  }

  bool operator==(const LabelMap&) const = default;

 private:
  Dims3 dims_;
  int num_classes_;
  std::vector<std::uint8_t> data_;
};

// Per-voxel class probabilities, channel-major: data[k * voxels + v].
// Construction validates that each voxel's probabilities are in [0,1]
// and sum to 1 within 1e-5.
class ProbMap {
 public:
  ProbMap(Dims3 dims, int num_classes, std::vector<float> data);

  const Dims3& dims() const { return dims_; }
  int num_classes() const { return num_classes_; }
  std::span<const float> data() const { return data_; }
  std::int64_t voxels() const { return dims_.voxels(); }

  float at(int cls, std::int64_t voxel) const {
    return data_[static_cast<std::int64_t>(cls) * dims_.voxels() + voxel];
  }

 private:
  Dims3 dims_;
  int num_classes_;
  std::vector<float> data_;
};

// Length-K non-negative loss weight vector (background included).
struct ClassWeights {
  std::vector<double> values;

  ClassWeights() = default;
  explicit ClassWeights(std::vector<double> v);

  int size() const { return static_cast<int>(values.size()); }
  double operator[](int k) const { return values[static_cast<std::size_t>(k)]; }
  bool operator==(const ClassWeights&) const = default;
};

// Pre-softmax scores, channel-major like ProbMap but f64: per-voxel class
// scores live at data[k * voxels + v].
struct Logits {
  Dims3 dims;
  int num_classes = 0;
  std::vector<double> data;

  std::int64_t voxels() const { return dims.voxels(); }
  double at(int cls, std::int64_t voxel) const {
    return data[static_cast<std::size_t>(cls) * static_cast<std::size_t>(dims.voxels()) + static_cast<std::size_t>(voxel)];
  }
};

// Numerically stabilized softmax over the class axis (per-voxel max is
// subtracted before exponentiation). Throws Errc::invalid_logits on
// non-finite input.
ProbMap softmax(const Logits& logits);

// Per-voxel argmax; ties resolve to the lowest class index.
LabelMap argmax_labels(const ProbMap& probs);

// Argmax straight off the scores; same tie rule as argmax_labels.
LabelMap argmax_labels(const Logits& logits);

// Voxel count per class; sums to dims.voxels().
std::vector<std::int64_t> class_voxel_counts(const LabelMap& labels, int num_classes);

}  // namespace dhc
