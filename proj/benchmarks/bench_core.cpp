// Microbenchmarks for the hot paths: per-voxel math, loss kernels, the
// distance transform, and a whole co-training step.

#include <benchmark/benchmark.h>

#include "dhc/cotrain.hpp"
#include "dhc/losses.hpp"
#include "dhc/metrics.hpp"
#include "dhc/phantom.hpp"
#include "dhc/rng.hpp"

namespace {

using namespace dhc;

Logits make_logits(Dims3 dims, int num_classes, std::uint64_t seed) {
  CounterRng rng(seed, 0, 0);
  Logits logits{dims, num_classes, {}};
  logits.data.resize(static_cast<std::size_t>(dims.voxels()) * num_classes);
  for (auto& z : logits.data) z = rng.next_uniform(-2.0, 2.0);
  return logits;
}

LabelMap make_labels(Dims3 dims, int num_classes, std::uint64_t seed) {
  CounterRng rng(seed, 1, 0);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(dims.voxels()));
  for (auto& v : data) v = static_cast<std::uint8_t>(rng.next_below(num_classes));
  return LabelMap(dims, num_classes, std::move(data));
}

void BM_Softmax(benchmark::State& state) {
  const Logits logits = make_logits({32, 32, 32}, 6, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax(logits));
  }
  state.SetItemsProcessed(state.iterations() * logits.dims.voxels());
}
BENCHMARK(BM_Softmax);

void BM_WeightedCrossEntropy(benchmark::State& state) {
  const Logits logits = make_logits({20, 20, 20}, 6, 2);
  const LabelMap target = make_labels({20, 20, 20}, 6, 2);
  const ClassWeights weights = uniform_weights(6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(weighted_cross_entropy(logits, target, weights));
  }
  state.SetItemsProcessed(state.iterations() * logits.dims.voxels());
}
BENCHMARK(BM_WeightedCrossEntropy);

void BM_SoftDice(benchmark::State& state) {
  const Logits logits = make_logits({20, 20, 20}, 6, 3);
  const LabelMap target = make_labels({20, 20, 20}, 6, 3);
  const ClassWeights weights = uniform_weights(6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(soft_dice_loss(logits, target, weights));
  }
  state.SetItemsProcessed(state.iterations() * logits.dims.voxels());
}
BENCHMARK(BM_SoftDice);

void BM_ExtractFeatures(benchmark::State& state) {
  CounterRng rng(4, 0, 0);
  std::vector<float> data(32 * 32 * 32);
  for (auto& v : data) v = static_cast<float>(rng.next_uniform(-1.0, 1.0));
  const Volume vol({32, 32, 32}, std::move(data));
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_features(vol));
  }
  state.SetItemsProcessed(state.iterations() * vol.voxels());
}
BENCHMARK(BM_ExtractFeatures);

void BM_SquaredDistanceField(benchmark::State& state) {
  const LabelMap mask = make_labels({32, 32, 32}, 2, 5);
  const auto seeds = boundary_voxels(mask, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(squared_distance_field(seeds, mask.dims(), Spacing{}));
  }
  state.SetItemsProcessed(state.iterations() * mask.dims().voxels());
}
BENCHMARK(BM_SquaredDistanceField);

void BM_TrainStep(benchmark::State& state) {
  PhantomSpec spec;
  spec.dims = {20, 20, 20};
  spec.num_classes = 4;
  spec.target_fractions = {0.85, 0.08, 0.05, 0.02};
  spec.shape_kinds = {ShapeKind::sphere, ShapeKind::sphere, ShapeKind::box, ShapeKind::sphere};
  spec.intensity_means = {0.0, 0.3, 0.6, 1.0};
  spec.noise_sigma = 0.05;
  spec.seed = 6;
  const Dataset ds = make_dataset(spec, 2, 2);

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.steps_per_epoch = 1 << 20;  // schedule long enough for any bench run
  cfg.crop_size = {20, 20, 20};
  CoTrainState cotrain = init_cotrain(cfg, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_step(cotrain, ds.labeled, ds.unlabeled));
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace
