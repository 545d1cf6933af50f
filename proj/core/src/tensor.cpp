#include "dhc/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace dhc {

namespace {

void check_dims(const Dims3& dims) {
  if (dims.d <= 0 || dims.h <= 0 || dims.w <= 0) {
    fail(Errc::invalid_argument, "dims must be positive");
  }
}

void check_spacing(const Spacing& s) {
  if (!(s.z > 0.0f) || !(s.y > 0.0f) || !(s.x > 0.0f)) {
    fail(Errc::invalid_argument, "spacing must be positive");
  }
}

}  // namespace

Volume::Volume(Dims3 dims, Spacing spacing) : dims_(dims), spacing_(spacing) {
  check_dims(dims);
  check_spacing(spacing);
  data_.assign(static_cast<std::size_t>(dims.voxels()), 0.0f);
}

Volume::Volume(Dims3 dims, std::vector<float> data, Spacing spacing)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_dims(dims);
  check_spacing(spacing);
  if (static_cast<std::int64_t>(data_.size()) != dims.voxels()) {
    fail(Errc::size_mismatch, "volume payload does not match dims");
  }
  for (float v : data_) {
    if (!std::isfinite(v)) fail(Errc::invalid_argument, "volume contains non-finite value");
  }
}

LabelMap::LabelMap(Dims3 dims, int num_classes) : dims_(dims), num_classes_(num_classes) {
  check_dims(dims);
  if (num_classes < 2 || num_classes > 256) {
    fail(Errc::invalid_argument, "num_classes must be in [2, 256]");
  }
  data_.assign(static_cast<std::size_t>(dims.voxels()), 0);
}

LabelMap::LabelMap(Dims3 dims, int num_classes, std::vector<std::uint8_t> data)
    : dims_(dims), num_classes_(num_classes), data_(std::move(data)) {
  check_dims(dims);
  if (num_classes < 2 || num_classes > 256) {
    fail(Errc::invalid_argument, "num_classes must be in [2, 256]");
  }
  if (static_cast<std::int64_t>(data_.size()) != dims.voxels()) {
    fail(Errc::size_mismatch, "label payload does not match dims");
  }
  for (std::uint8_t v : data_) {
    if (v >= num_classes_) fail(Errc::label_out_of_range, "label out of range");
  }
}

ProbMap::ProbMap(Dims3 dims, int num_classes, std::vector<float> data)
    : dims_(dims), num_classes_(num_classes), data_(std::move(data)) {
  check_dims(dims);
  if (num_classes < 2) fail(Errc::invalid_argument, "num_classes must be >= 2");
  const std::int64_t n = dims.voxels();
  if (static_cast<std::int64_t>(data_.size()) != n * num_classes) {
    fail(Errc::size_mismatch, "probability payload does not match dims");
  }
  for (std::int64_t v = 0; v < n; ++v) {
    double sum = 0.0;
    for (int k = 0; k < num_classes; ++k) {
      const float p = data_[static_cast<std::size_t>(k) * n + v];
      if (!(p >= 0.0f) || !(p <= 1.0f)) {
        fail(Errc::invalid_argument, "probability outside [0,1]");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-5) {
      fail(Errc::invalid_argument, "voxel probabilities do not sum to 1");
    }
  }
}

ClassWeights::ClassWeights(std::vector<double> v) : values(std::move(v)) {
  for (double w : values) {
    if (!std::isfinite(w) || w < 0.0) {
      fail(Errc::invalid_argument, "class weights must be finite and non-negative");
    }
  }
}

ProbMap softmax(const Logits& logits) {
  const std::int64_t n = logits.dims.voxels();
  const int num_classes = logits.num_classes;
  if (num_classes < 2) fail(Errc::invalid_argument, "softmax needs at least 2 classes");
  if (static_cast<std::int64_t>(logits.data.size()) != n * num_classes) {
    fail(Errc::shape_mismatch, "logits payload does not match dims");
  }
  for (double z : logits.data) {
    if (!std::isfinite(z)) fail(Errc::invalid_logits, "invalid logits");
  }

  std::vector<float> out(logits.data.size());
  for (std::int64_t v = 0; v < n; ++v) {
    double zmax = logits.data[static_cast<std::size_t>(v)];
    for (int k = 1; k < num_classes; ++k) {
      zmax = std::max(zmax, logits.data[static_cast<std::size_t>(k) * n + v]);
    }
    double sum = 0.0;
    for (int k = 0; k < num_classes; ++k) {
      sum += std::exp(logits.data[static_cast<std::size_t>(k) * n + v] - zmax);
    }
    for (int k = 0; k < num_classes; ++k) {
      const double e = std::exp(logits.data[static_cast<std::size_t>(k) * n + v] - zmax);
      out[static_cast<std::size_t>(k) * n + v] = static_cast<float>(e / sum);
    }
  }
  return ProbMap(logits.dims, num_classes, std::move(out));
}

LabelMap argmax_labels(const ProbMap& probs) {
  const std::int64_t n = probs.voxels();
  const int num_classes = probs.num_classes();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n));
  const auto data = probs.data();
  for (std::int64_t v = 0; v < n; ++v) {
    int best = 0;
    float best_p = data[static_cast<std::size_t>(v)];
    for (int k = 1; k < num_classes; ++k) {
      const float p = data[static_cast<std::size_t>(k) * n + v];
      if (p > best_p) {
        best_p = p;
        best = k;
      }
    }
    out[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(best);
  }
  return LabelMap(probs.dims(), num_classes, std::move(out));
}

LabelMap argmax_labels(const Logits& logits) {
  const std::int64_t n = logits.dims.voxels();
  const int num_classes = logits.num_classes;
  if (static_cast<std::int64_t>(logits.data.size()) != n * num_classes) {
    fail(Errc::shape_mismatch, "logits payload does not match dims");
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n));
  for (std::int64_t v = 0; v < n; ++v) {
    int best = 0;
    double best_z = logits.data[static_cast<std::size_t>(v)];
    for (int k = 1; k < num_classes; ++k) {
      const double z = logits.data[static_cast<std::size_t>(k) * n + v];
      if (z > best_z) {
        best_z = z;
        best = k;
      }
    }
    out[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(best);
  }
  return LabelMap(logits.dims, num_classes, std::move(out));
}

std::vector<std::int64_t> class_voxel_counts(const LabelMap& labels, int num_classes) {
  if (num_classes != labels.num_classes()) {
    fail(Errc::shape_mismatch, "num_classes does not match label map");
  }
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::uint8_t v : labels.data()) ++counts[v];
  return counts;
}

}  // namespace dhc
