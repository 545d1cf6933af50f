#pragma once

#include "dhc/tensor.hpp"

namespace dhc {

// Fixed per-voxel descriptors, channel-major [f][z][y][x]:
//   0: raw intensity
//   1: Gaussian-smoothed intensity, sigma = 1 voxel (3-tap separable kernel)
//   2: Gaussian-smoothed intensity, sigma = 2 voxels (5-tap separable kernel)
//   3..5: normalized z, y, x coordinates in [0, 1]
// Kernel taps are exp(-k^2 / (2 sigma^2)), normalized to sum 1; boundaries
// are mirrored (index -1 reads index 1).
inline constexpr int kNumFeatures = 6;

struct FeatureField {
  Dims3 dims;
  int num_features = 0;
  std::vector<float> data;

  std::int64_t voxels() const { return dims.voxels(); }
  float at(int feature, std::int64_t voxel) const {
    return data[static_cast<std::size_t>(feature) * static_cast<std::size_t>(dims.voxels()) +
                static_cast<std::size_t>(voxel)];
  }
};

FeatureField extract_features(const Volume& v);

}  // namespace dhc
