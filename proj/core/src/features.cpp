#include "dhc/features.hpp"

#include <array>
#include <cmath>

namespace dhc {

namespace {

// Mirror without repeating the edge sample: -1 -> 1, n -> n-2.
int reflect(int idx, int n) {
  if (n == 1) return 0;
  while (idx < 0 || idx >= n) {
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * n - 2 - idx;
  }
  return idx;
}

template <std::size_t Taps>
std::array<float, Taps> gaussian_kernel(double sigma) {
  static_assert(Taps % 2 == 1);
  constexpr int radius = static_cast<int>(Taps / 2);
  std::array<float, Taps> k{};
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = static_cast<float>(w);
    sum += w;
  }
  for (auto& w : k) w = static_cast<float>(w / sum);
  return k;
}

// Separable convolution along one axis, mirrored borders.
template <std::size_t Taps>
void convolve_axis(const Dims3& dims, int axis, const std::array<float, Taps>& kernel,
                   const std::vector<float>& in, std::vector<float>& out) {
  constexpr int radius = static_cast<int>(Taps / 2);
  const int sizes[3] = {dims.d, dims.h, dims.w};
  const std::int64_t strides[3] = {static_cast<std::int64_t>(dims.h) * dims.w, dims.w, 1};
  const int n = sizes[axis];
  const std::int64_t stride = strides[axis];

  for (int z = 0; z < dims.d; ++z) {
    for (int y = 0; y < dims.h; ++y) {
      for (int x = 0; x < dims.w; ++x) {
        const int coord[3] = {z, y, x};
        const std::int64_t base =
            (static_cast<std::int64_t>(z) * dims.h + y) * dims.w + x - coord[axis] * stride;
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const int src = reflect(coord[axis] + t, n);
          acc += static_cast<double>(kernel[static_cast<std::size_t>(t + radius)]) *
                 in[static_cast<std::size_t>(base + src * stride)];
        }
        out[static_cast<std::size_t>((static_cast<std::int64_t>(z) * dims.h + y) * dims.w + x)] =
            static_cast<float>(acc);
      }
    }
  }
}

template <std::size_t Taps>
std::vector<float> smooth3d(const Dims3& dims, double sigma, const std::vector<float>& in) {
  const auto kernel = gaussian_kernel<Taps>(sigma);
  std::vector<float> a(in.size()), b(in.size());
  convolve_axis(dims, 0, kernel, in, a);
  convolve_axis(dims, 1, kernel, a, b);
  convolve_axis(dims, 2, kernel, b, a);
  return a;
}

}  // namespace

FeatureField extract_features(const Volume& v) {
  const Dims3 dims = v.dims();
  const std::int64_t n = dims.voxels();
  std::vector<float> raw(v.data().begin(), v.data().end());

  FeatureField f{dims, kNumFeatures, {}};
  f.data.resize(static_cast<std::size_t>(n) * kNumFeatures);

  std::copy(raw.begin(), raw.end(), f.data.begin());
  const std::vector<float> s1 = smooth3d<3>(dims, 1.0, raw);
  const std::vector<float> s2 = smooth3d<5>(dims, 2.0, raw);
  std::copy(s1.begin(), s1.end(), f.data.begin() + n);
  std::copy(s2.begin(), s2.end(), f.data.begin() + 2 * n);

  // Normalized coordinates; single-voxel axes map to 0.
  const float dz = dims.d > 1 ? 1.0f / static_cast<float>(dims.d - 1) : 0.0f;
  const float dy = dims.h > 1 ? 1.0f / static_cast<float>(dims.h - 1) : 0.0f;
  const float dx = dims.w > 1 ? 1.0f / static_cast<float>(dims.w - 1) : 0.0f;
  std::int64_t i = 0;
  for (int z = 0; z < dims.d; ++z) {
    for (int y = 0; y < dims.h; ++y) {
      for (int x = 0; x < dims.w; ++x, ++i) {
        f.data[static_cast<std::size_t>(3 * n + i)] = static_cast<float>(z) * dz;
        f.data[static_cast<std::size_t>(4 * n + i)] = static_cast<float>(y) * dy;
        f.data[static_cast<std::size_t>(5 * n + i)] = static_cast<float>(x) * dx;
      }
    }
  }
  return f;
}

}  // namespace dhc
