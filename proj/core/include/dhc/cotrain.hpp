#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "dhc/metrics.hpp"
#include "dhc/model.hpp"
#include "dhc/phantom.hpp"
#include "dhc/weighting.hpp"

namespace dhc {

enum class Strategy { uniform, distdw, diffdw };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

struct TrainConfig {
  int epochs = 60;
  int steps_per_epoch = 25;
  int labeled_per_batch = 2;
  int unlabeled_per_batch = 2;
  double lambda_u = 0.1;
  int rampup_epochs = 0;  // 0 = span the whole run
  Dims3 crop_size = {20, 20, 20};
  bool flip_augment = true;
  std::uint64_t seed = 1;
  Strategy strategy_a = Strategy::diffdw;
  Strategy strategy_b = Strategy::distdw;
  double distdw_beta = 0.99;
  DiffDWConfig diffdw;
  double lr0 = 0.03;
  double momentum = 0.9;
  double poly_power = 0.9;
  bool eval_sliding_window = false;
  Dims3 eval_window = {32, 32, 32};
  Dims3 eval_stride = {32, 32, 16};

  int effective_rampup_epochs() const { return rampup_epochs > 0 ? rampup_epochs : epochs; }
  void validate() const;
};

TrainConfig parse_train_config_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg);

struct SubModel {
  LinearModel model;
  OptState opt;
};

// Two sub-models exchanging hard pseudo labels, each loss re-weighted by
// its own strategy. One weighting tracker of each kind is kept; a tracker
// updates only while some sub-model uses its strategy.
struct CoTrainState {
  SubModel a, b;
  DiffDWState diffdw;
  DistDWState distdw;
  int epoch = 0;
  std::int64_t iteration = 0;
  TrainConfig cfg;
};

CoTrainState init_cotrain(const TrainConfig& cfg, int num_classes);

// Gaussian warm-up factor exp(-5 (1 - min(epoch/rampup_epochs, 1))^2);
// reaches exactly 1 at epoch >= rampup_epochs. rampup_epochs must be > 0.
double rampup(int epoch, int rampup_epochs);

struct StepReport {
  std::int64_t iteration = 0;
  double ramp = 0.0;
  double sup_a = 0.0, unsup_a = 0.0, total_a = 0.0;
  double sup_b = 0.0, unsup_b = 0.0, total_b = 0.0;
  ClassWeights weights_a, weights_b;
};

// One co-training update on prepared (already cropped/flipped) batches:
// forward both models on every input, exchange argmax pseudo labels,
// refresh the weighting trackers, take one SGD step per model. Pseudo
// labels are constants within the step; no gradient reaches the peer.
StepReport train_step(CoTrainState& state, std::span<const LabeledSample> labeled_batch,
                      std::span<const Volume> unlabeled_batch);

// Ensemble prediction: elementwise mean of the two sub-models' maps.
ProbMap infer(const CoTrainState& state, const Volume& v);

// Overlapping-window ensemble prediction averaged per voxel; the final
// window along each axis is clamped to the boundary so every voxel is
// covered.
ProbMap sliding_window_infer(const CoTrainState& state, const Volume& v, Dims3 window,
                             Dims3 stride);

// Window origins along one axis under the clamped-stride rule.
std::vector<int> window_starts(int extent, int window, int stride);

struct EpochEval {
  int epoch = 0;
  ClassReport ensemble;
};

struct MetricsLog {
  std::vector<EpochEval> evals;
  std::filesystem::path losses_csv, weights_csv, metrics_csv;
};

struct ExperimentResult {
  MetricsLog log;
  CoTrainState state;
};

// Full training run: per-step batch sampling/augmentation, CSV logging
// (losses.csv, weights.csv, metrics.csv under out_dir), per-epoch
// evaluation of the ensemble on the unlabeled split's retained ground
// truth. Deterministic in (cfg, dataset): reruns produce identical bytes.
ExperimentResult run_experiment(const TrainConfig& cfg, const Dataset& dataset,
                                const std::filesystem::path& out_dir);

}  // namespace dhc
