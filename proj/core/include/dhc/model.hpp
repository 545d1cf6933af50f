#pragma once

#include <filesystem>
#include <utility>

#include "dhc/features.hpp"
#include "dhc/tensor.hpp"

namespace dhc {

// Per-voxel linear classifier over the fixed feature field. Parameters in
// double so analytic gradients check cleanly against finite differences.
struct LinearModel {
  int num_classes = 0;
  int num_features = 0;
  std::vector<double> weight;  // [K][F], row-major
  std::vector<double> bias;    // [K]

  double w(int cls, int feature) const {
    return weight[static_cast<std::size_t>(cls) * num_features + static_cast<std::size_t>(feature)];
  }
};

// Seeded uniform(-0.01, 0.01) initialization; instance picks an
// independent stream so sibling sub-models start from different points.
LinearModel init_linear_model(int num_classes, int num_features, std::uint64_t seed,
                              std::uint64_t instance = 0);

Logits forward_logits(const LinearModel& m, const FeatureField& f);

struct ForwardResult {
  Logits logits;
  ProbMap probs;
};
ForwardResult forward(const LinearModel& m, const FeatureField& f);

struct ParamGrads {
  std::vector<double> weight;  // [K][F]
  std::vector<double> bias;    // [K]
};

// Chain rule for the linear head: dL/dW = grad_logits * f^T summed over
// voxels, dL/db = per-class voxel sum of grad_logits.
ParamGrads backward(const LinearModel& m, const FeatureField& f, const Logits& grad_logits);

void accumulate(ParamGrads& into, const ParamGrads& grads, double scale);

// SGD with momentum under polynomial learning-rate decay
// lr_t = lr0 * (1 - step/total_steps)^poly_power.
struct OptState {
  double lr0 = 0.03;
  double momentum = 0.9;
  double poly_power = 0.9;
  std::int64_t step = 0;
  std::int64_t total_steps = 0;
  std::vector<double> velocity_weight;
  std::vector<double> velocity_bias;
};

OptState make_opt_state(const LinearModel& m, std::int64_t total_steps);

double poly_lr(const OptState& opt);

// velocity <- momentum * velocity + grads; params <- params - lr_t * velocity.
// Throws Errc::step_overflow once the schedule is exhausted.
void sgd_step(LinearModel& m, const ParamGrads& grads, OptState& opt);

// Checkpoint container: magic "DHCMDL01", u32 LE header length, JSON
// header, little-endian f64 payload (a.weight, a.bias, b.weight, b.bias).
void save_checkpoint(const std::filesystem::path& path, const LinearModel& a, const LinearModel& b);
std::pair<LinearModel, LinearModel> load_checkpoint(const std::filesystem::path& path);

}  // namespace dhc
