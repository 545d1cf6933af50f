#include <doctest.h>

#include <cmath>
#include <fstream>

#include "dhc/cotrain.hpp"
#include "dhc/losses.hpp"
#include "dhc/rng.hpp"
#include "oracle_helpers.hpp"

using namespace dhc;

namespace {

Volume random_volume(Dims3 dims, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<float> data(static_cast<std::size_t>(dims.voxels()));
  for (auto& v : data) v = static_cast<float>(rng.next_uniform(lo, hi));
  return Volume(dims, std::move(data));
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.steps_per_epoch = 1;
  cfg.labeled_per_batch = 2;
  cfg.unlabeled_per_batch = 2;
  cfg.crop_size = {4, 4, 4};
  cfg.seed = 7;
  return cfg;
}

struct TinyBatch {
  std::vector<LabeledSample> labeled;
  std::vector<Volume> unlabeled;
};

TinyBatch make_batch(Dims3 dims, int num_classes, std::uint64_t seed) {
  CounterRng rng(seed, 0, 0);
  TinyBatch batch;
  for (int i = 0; i < 2; ++i) {
    Volume v = random_volume(dims, rng);
    batch.labeled.push_back(LabeledSample{std::move(v), oracle::random_labels(dims, num_classes, rng)});
  }
  for (int i = 0; i < 2; ++i) batch.unlabeled.push_back(random_volume(dims, rng));
  return batch;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Dataset tiny_dataset(std::uint64_t seed) {
  PhantomSpec spec;
  spec.dims = {8, 8, 8};
  spec.num_classes = 3;
  spec.target_fractions = {0.8, 0.13, 0.07};
  spec.shape_kinds = {ShapeKind::sphere, ShapeKind::sphere, ShapeKind::box};
  spec.intensity_means = {0.0, 0.5, 1.0};
  spec.noise_sigma = 0.05;
  spec.seed = seed;
  return make_dataset(spec, 2, 3);
}

}  // namespace

TEST_CASE("rampup contract") {
  CHECK(rampup(10, 10) == 1.0);
  CHECK(rampup(25, 10) == 1.0);
  CHECK(rampup(0, 40) == doctest::Approx(std::exp(-5.0)).epsilon(1e-12));
  CHECK(rampup(20, 40) == doctest::Approx(std::exp(-1.25)).epsilon(1e-12));

  double prev = 0.0;
  for (int e = 0; e <= 1000; ++e) {
    const double r = rampup(e, 700);
    CHECK(r >= prev);
    CHECK(r > 0.0);
    CHECK(r <= 1.0);
    prev = r;
  }
  CHECK_THROWS_AS(rampup(1, 0), Error);
  CHECK_THROWS_AS(rampup(1, -3), Error);
}

TEST_CASE("init gives sibling models distinct parameters") {
  TrainConfig cfg = tiny_config();
  const CoTrainState state = init_cotrain(cfg, 3);
  CHECK(state.a.model.weight != state.b.model.weight);
  CHECK(state.a.opt.lr0 == 0.03);
  CHECK(state.a.opt.total_steps == 1);
}

TEST_CASE("uniform strategies with zero unsupervised weight take plain supervised steps") {
  TrainConfig cfg = tiny_config();
  cfg.strategy_a = Strategy::uniform;
  cfg.strategy_b = Strategy::uniform;
  cfg.lambda_u = 0.0;
  const Dims3 dims{3, 3, 3};
  CoTrainState state = init_cotrain(cfg, 3);
  const LinearModel a_before = state.a.model;
  const TinyBatch batch = make_batch(dims, 3, 11);

  const StepReport report = train_step(state, batch.labeled, batch.unlabeled);
  CHECK(report.total_a == report.sup_a);
  CHECK(report.total_b == report.sup_b);
  CHECK(report.weights_a.values == std::vector<double>(3, 1.0));
  CHECK(report.weights_b.values == std::vector<double>(3, 1.0));

  // Re-derive model A's step by hand: mean supervised-CE gradient, one
  // SGD update, nothing else.
  LinearModel manual = a_before;
  OptState opt = make_opt_state(manual, 1);
  ParamGrads grads;
  const ClassWeights uniform = uniform_weights(3);
  for (const auto& sample : batch.labeled) {
    const FeatureField f = extract_features(sample.volume);
    const Logits z = forward_logits(manual, f);
    const LossResult ce = weighted_cross_entropy(z, sample.labels, uniform);
    Logits scaled{z.dims, z.num_classes, std::vector<double>(z.data.size())};
    for (std::size_t i = 0; i < scaled.data.size(); ++i) scaled.data[i] = 0.5 * ce.grad_logits[i];
    accumulate(grads, backward(manual, f, scaled), 1.0);
  }
  sgd_step(manual, grads, opt);
  for (std::size_t i = 0; i < manual.weight.size(); ++i) {
    CHECK(state.a.model.weight[i] == doctest::Approx(manual.weight[i]).epsilon(1e-14));
  }
}

TEST_CASE("single-voxel step matches a hand evaluation of all four loss terms") {
  TrainConfig cfg = tiny_config();
  cfg.labeled_per_batch = 1;
  cfg.unlabeled_per_batch = 1;
  cfg.strategy_a = Strategy::uniform;
  cfg.strategy_b = Strategy::uniform;
  CoTrainState state = init_cotrain(cfg, 2);

  // Pin the sub-models: logits depend only on intensity and bias.
  // Features of a 1x1x1 volume with value c: [c, c, c, 0, 0, 0].
  state.a.model.weight.assign(2 * kNumFeatures, 0.0);
  state.a.model.weight[0] = 1.0;   // class 0 reads the raw intensity
  state.a.model.bias = {0.0, 0.2};
  state.b.model.weight.assign(2 * kNumFeatures, 0.0);
  state.b.model.weight[kNumFeatures] = -0.5;  // class 1 reads the raw intensity
  state.b.model.bias = {0.1, 0.0};

  const double c_l = 0.8, c_u = -0.4;
  std::vector<LabeledSample> labeled;
  labeled.push_back(LabeledSample{Volume({1, 1, 1}, std::vector<float>{static_cast<float>(c_l)}),
                                  LabelMap({1, 1, 1}, 2, {1})});
  std::vector<Volume> unlabeled;
  unlabeled.push_back(Volume({1, 1, 1}, std::vector<float>{static_cast<float>(c_u)}));

  const StepReport report = train_step(state, labeled, unlabeled);

  // Straight-line recomputation with scalar arithmetic.
  const double fl = static_cast<float>(c_l);
  const double fu = static_cast<float>(c_u);
  auto softmax2 = [](double z0, double z1) {
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    return std::pair<double, double>{e0 / (e0 + e1), e1 / (e0 + e1)};
  };
  auto pair_loss = [](double p0, double p1, int t) {
    const double pt = t == 0 ? p0 : p1;
    const double ce = -std::log(pt);
    const double s = kDiceSmooth;
    const double d_t = (2.0 * pt + s) / (pt + 1.0 + s);
    const double d_o = s / ((t == 0 ? p1 : p0) + s);
    const double dice = 0.5 * ((1.0 - d_t) + (1.0 - d_o));
    return 0.5 * (ce + dice);
  };

  // Model A logits: z0 = c, z1 = 0.2. Model B: z0 = 0.1, z1 = -0.5 c.
  const auto [pa0_l, pa1_l] = softmax2(fl, 0.2);
  const auto [pb0_l, pb1_l] = softmax2(0.1, -0.5 * fl);
  const auto [pa0_u, pa1_u] = softmax2(fu, 0.2);
  const auto [pb0_u, pb1_u] = softmax2(0.1, -0.5 * fu);

  const int yb_l = pb0_l >= pb1_l ? 0 : 1;  // ties break low
  const int yb_u = pb0_u >= pb1_u ? 0 : 1;
  const int ya_l = pa0_l >= pa1_l ? 0 : 1;
  const int ya_u = pa0_u >= pa1_u ? 0 : 1;

  const double sup_a = -std::log(pa1_l);  // ground truth class 1
  const double sup_b = -std::log(pb1_l);
  const double unsup_a = 0.5 * (pair_loss(pa0_l, pa1_l, yb_l) + pair_loss(pa0_u, pa1_u, yb_u));
  const double unsup_b = 0.5 * (pair_loss(pb0_l, pb1_l, ya_l) + pair_loss(pb0_u, pb1_u, ya_u));
  const double ramp = std::exp(-5.0);  // epoch 0 of 1

  CHECK(report.ramp == doctest::Approx(ramp).epsilon(1e-12));
  CHECK(report.sup_a == doctest::Approx(sup_a).epsilon(1e-12));
  CHECK(report.sup_b == doctest::Approx(sup_b).epsilon(1e-12));
  CHECK(report.unsup_a == doctest::Approx(unsup_a).epsilon(1e-12));
  CHECK(report.unsup_b == doctest::Approx(unsup_b).epsilon(1e-12));
  CHECK(report.total_a == doctest::Approx(sup_a + 0.1 * ramp * unsup_a).epsilon(1e-12));
  CHECK(report.total_b == doctest::Approx(sup_b + 0.1 * ramp * unsup_b).epsilon(1e-12));
}

TEST_CASE("total losses decompose exactly") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.steps_per_epoch = 2;
  CoTrainState state = init_cotrain(cfg, 3);
  const Dims3 dims{3, 3, 3};
  for (int i = 0; i < 4; ++i) {
    const TinyBatch batch = make_batch(dims, 3, 100 + static_cast<std::uint64_t>(i));
    const StepReport r = train_step(state, batch.labeled, batch.unlabeled);
    CHECK(r.total_a == r.sup_a + cfg.lambda_u * r.ramp * r.unsup_a);
    CHECK(r.total_b == r.sup_b + cfg.lambda_u * r.ramp * r.unsup_b);
  }
}

TEST_CASE("weight vectors route by strategy") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  cfg.steps_per_epoch = 2;
  cfg.strategy_a = Strategy::diffdw;
  cfg.strategy_b = Strategy::distdw;
  CoTrainState state = init_cotrain(cfg, 3);
  const Dims3 dims{3, 3, 3};
  StepReport last;
  for (int i = 0; i < 5; ++i) {
    const TinyBatch batch = make_batch(dims, 3, 200 + static_cast<std::uint64_t>(i));
    last = train_step(state, batch.labeled, batch.unlabeled);
  }
  // Model A's vector must equal the difficulty tracker's output, model
  // B's the distribution tracker's EMA state.
  CHECK(last.weights_a.values == diffdw_weights(state.diffdw).values);
  CHECK(state.distdw.initialized);
  CHECK(last.weights_b.values == state.distdw.weights.values);
  CHECK(last.weights_a.values != last.weights_b.values);
}

TEST_CASE("swapping strategies swaps which model reads which tracker") {
  const Dims3 dims{3, 3, 3};
  TrainConfig cfg = tiny_config();
  cfg.strategy_a = Strategy::uniform;
  cfg.strategy_b = Strategy::distdw;
  CoTrainState state = init_cotrain(cfg, 3);
  const TinyBatch batch = make_batch(dims, 3, 300);
  const StepReport r1 = train_step(state, batch.labeled, batch.unlabeled);
  CHECK(r1.weights_a.values == std::vector<double>(3, 1.0));
  CHECK(r1.weights_b.values != std::vector<double>(3, 1.0));

  TrainConfig swapped = cfg;
  swapped.strategy_a = Strategy::distdw;
  swapped.strategy_b = Strategy::uniform;
  CoTrainState state2 = init_cotrain(swapped, 3);
  const StepReport r2 = train_step(state2, batch.labeled, batch.unlabeled);
  CHECK(r2.weights_b.values == std::vector<double>(3, 1.0));
  CHECK(r2.weights_a.values != std::vector<double>(3, 1.0));
}

TEST_CASE("pseudo labels are detached: peer rescaling cannot move model A") {
  const Dims3 dims{3, 3, 3};
  TrainConfig cfg = tiny_config();
  CoTrainState s1 = init_cotrain(cfg, 3);
  CoTrainState s2 = init_cotrain(cfg, 3);
  // Doubling B's parameters scales its logits but keeps every argmax, so
  // model A sees identical pseudo labels.
  for (auto& w : s2.b.model.weight) w *= 2.0;
  for (auto& b : s2.b.model.bias) b *= 2.0;

  const TinyBatch batch = make_batch(dims, 3, 400);
  train_step(s1, batch.labeled, batch.unlabeled);
  train_step(s2, batch.labeled, batch.unlabeled);
  CHECK(s1.a.model.weight == s2.a.model.weight);
  CHECK(s1.a.model.bias == s2.a.model.bias);
  CHECK(s1.b.model.weight != s2.b.model.weight);
}

TEST_CASE("train_step rejects class-count mismatches") {
  TrainConfig cfg = tiny_config();
  CoTrainState state = init_cotrain(cfg, 2);
  const TinyBatch batch = make_batch({3, 3, 3}, 3, 500);
  CHECK_THROWS_AS(train_step(state, batch.labeled, batch.unlabeled), Error);
}

TEST_CASE("infer averages the two sub-models") {
  TrainConfig cfg = tiny_config();
  CoTrainState state = init_cotrain(cfg, 2);
  state.a.model.weight.assign(2 * kNumFeatures, 0.0);
  state.b.model.weight.assign(2 * kNumFeatures, 0.0);
  state.a.model.bias = {60.0, 0.0};  // A says class 0
  state.b.model.bias = {0.0, 60.0};  // B says class 1
  const Volume v({2, 2, 2}, std::vector<float>(8, 0.0f));
  const ProbMap p = infer(state, v);
  for (std::int64_t i = 0; i < 8; ++i) {
    CHECK(p.at(0, i) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(p.at(1, i) == doctest::Approx(0.5).epsilon(1e-6));
  }

  // Identical sub-models: the ensemble equals either one.
  state.b.model = state.a.model;
  const ProbMap q = infer(state, v);
  for (std::int64_t i = 0; i < 8; ++i) CHECK(q.at(0, i) > 0.999f);

  // Means of valid distributions still sum to one.
  CounterRng rng(107, 0, 0);
  CoTrainState random_state = init_cotrain(cfg, 2);
  const ProbMap r = infer(random_state, random_volume({3, 3, 3}, rng));
  for (std::int64_t i = 0; i < r.voxels(); ++i) {
    CHECK(std::abs(r.at(0, i) + r.at(1, i) - 1.0f) < 1e-5);
  }
}

TEST_CASE("sliding window with a full-volume window equals infer") {
  TrainConfig cfg = tiny_config();
  CoTrainState state = init_cotrain(cfg, 2);
  CounterRng rng(109, 0, 0);
  const Volume v = random_volume({6, 6, 6}, rng);
  const ProbMap whole = infer(state, v);
  const ProbMap windowed = sliding_window_infer(state, v, {6, 6, 6}, {6, 6, 6});
  for (std::size_t i = 0; i < whole.data().size(); ++i) {
    CHECK(windowed.data()[i] == whole.data()[i]);
  }
}

TEST_CASE("non-overlapping tiles each see exactly one prediction") {
  TrainConfig cfg = tiny_config();
  CoTrainState state = init_cotrain(cfg, 2);
  CounterRng rng(113, 0, 0);
  const Volume v = random_volume({4, 4, 8}, rng);
  const ProbMap tiled = sliding_window_infer(state, v, {4, 4, 4}, {4, 4, 4});

  // Compare the second tile against direct inference on its crop.
  std::vector<float> crop_data(64);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) crop_data[static_cast<std::size_t>((z * 4 + y) * 4 + x)] = v.at(z, y, 4 + x);
  const ProbMap piece = infer(state, Volume({4, 4, 4}, std::move(crop_data)));
  for (int z = 0; z < 4; ++z) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        const std::int64_t dst = (static_cast<std::int64_t>(z) * 4 + y) * 8 + 4 + x;
        const std::int64_t src = (static_cast<std::int64_t>(z) * 4 + y) * 4 + x;
        CHECK(tiled.at(0, dst) == piece.at(0, src));
      }
    }
  }
}

TEST_CASE("window placement coverage matches brute-force enumeration") {
  const Dims3 dims{8, 8, 8};
  const Dims3 window{4, 4, 4};
  const Dims3 stride{2, 2, 2};

  // Coverage implied by the placement API.
  std::vector<int> cover(static_cast<std::size_t>(dims.voxels()), 0);
  for (int z0 : window_starts(dims.d, window.d, stride.d))
    for (int y0 : window_starts(dims.h, window.h, stride.h))
      for (int x0 : window_starts(dims.w, window.w, stride.w))
        for (int z = z0; z < z0 + window.d; ++z)
          for (int y = y0; y < y0 + window.h; ++y)
            for (int x = x0; x < x0 + window.w; ++x)
              ++cover[static_cast<std::size_t>((static_cast<std::int64_t>(z) * 8 + y) * 8 + x)];

  CHECK(cover == oracle::brute_force_coverage(dims, window, stride));
  for (int c : cover) CHECK(c >= 1);
}

TEST_CASE("sliding window equals the per-placement average") {
  TrainConfig cfg = tiny_config();
  CoTrainState state = init_cotrain(cfg, 2);
  CounterRng rng(127, 0, 0);
  const Volume v = random_volume({6, 5, 6}, rng);
  const Dims3 window{4, 3, 4};
  const Dims3 stride{2, 2, 2};
  const ProbMap fast = sliding_window_infer(state, v, window, stride);

  std::vector<double> sum(static_cast<std::size_t>(v.voxels()) * 2, 0.0);
  std::vector<int> cover(static_cast<std::size_t>(v.voxels()), 0);
  for (int z0 : window_starts(6, window.d, stride.d)) {
    for (int y0 : window_starts(5, window.h, stride.h)) {
      for (int x0 : window_starts(6, window.w, stride.w)) {
        std::vector<float> crop(static_cast<std::size_t>(window.voxels()));
        std::size_t i = 0;
        for (int z = 0; z < window.d; ++z)
          for (int y = 0; y < window.h; ++y)
            for (int x = 0; x < window.w; ++x, ++i) crop[i] = v.at(z0 + z, y0 + y, x0 + x);
        const ProbMap piece = infer(state, Volume(window, std::move(crop)));
        i = 0;
        for (int z = 0; z < window.d; ++z) {
          for (int y = 0; y < window.h; ++y) {
            for (int x = 0; x < window.w; ++x, ++i) {
              const std::int64_t dst =
                  (static_cast<std::int64_t>(z0 + z) * 5 + (y0 + y)) * 6 + (x0 + x);
              sum[static_cast<std::size_t>(dst)] += piece.at(0, static_cast<std::int64_t>(i));
              sum[static_cast<std::size_t>(v.voxels() + dst)] += piece.at(1, static_cast<std::int64_t>(i));
              ++cover[static_cast<std::size_t>(dst)];
            }
          }
        }
      }
    }
  }
  for (std::int64_t i = 0; i < v.voxels(); ++i) {
    CHECK(fast.at(0, i) ==
          doctest::Approx(sum[static_cast<std::size_t>(i)] / cover[static_cast<std::size_t>(i)])
              .epsilon(1e-6));
  }
}

TEST_CASE("sliding window rejects bad geometry") {
  TrainConfig cfg = tiny_config();
  CoTrainState state = init_cotrain(cfg, 2);
  const Volume v({4, 4, 4}, std::vector<float>(64, 0.0f));
  CHECK_THROWS_AS(sliding_window_infer(state, v, {5, 4, 4}, {2, 2, 2}), Error);
  CHECK_THROWS_AS(sliding_window_infer(state, v, {4, 4, 4}, {0, 2, 2}), Error);
}

TEST_CASE("run_experiment with zero epochs evaluates the untrained ensemble") {
  const Dataset ds = tiny_dataset(555);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 0;
  cfg.crop_size = {6, 6, 6};
  const auto dir = std::filesystem::temp_directory_path() / "dhc_cotrain_tests" / "e0";
  std::filesystem::remove_all(dir);
  const ExperimentResult result = run_experiment(cfg, ds, dir);
  CHECK(result.log.evals.size() == 1);
  CHECK(result.log.evals[0].epoch == 0);

  const std::string metrics = slurp(dir / "metrics.csv");
  CHECK(metrics.find("epoch,model,class,dice,asd") == 0);
  const std::string losses = slurp(dir / "losses.csv");
  CHECK(losses == "iteration,model,sup,unsup,total,ramp\n");
}

TEST_CASE("run_experiment is byte-deterministic") {
  const Dataset ds = tiny_dataset(777);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.steps_per_epoch = 3;
  cfg.crop_size = {6, 6, 6};
  cfg.seed = 31;

  const auto base = std::filesystem::temp_directory_path() / "dhc_cotrain_tests";
  const auto dir1 = base / "run1";
  const auto dir2 = base / "run2";
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
  const ExperimentResult r1 = run_experiment(cfg, ds, dir1);
  const ExperimentResult r2 = run_experiment(cfg, ds, dir2);

  CHECK(slurp(dir1 / "losses.csv") == slurp(dir2 / "losses.csv"));
  CHECK(slurp(dir1 / "weights.csv") == slurp(dir2 / "weights.csv"));
  CHECK(slurp(dir1 / "metrics.csv") == slurp(dir2 / "metrics.csv"));
  CHECK(!slurp(dir1 / "losses.csv").empty());
  CHECK(r1.state.a.model.weight == r2.state.a.model.weight);

  // Evaluations: epoch 0 baseline plus one per trained epoch.
  CHECK(r1.log.evals.size() == 3);
}

TEST_CASE("train config json round trip") {
  TrainConfig cfg = tiny_config();
  cfg.strategy_a = Strategy::distdw;
  cfg.lambda_u = 0.25;
  cfg.eval_sliding_window = true;
  const TrainConfig back = parse_train_config_json(train_config_to_json(cfg));
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.strategy_a == Strategy::distdw);
  CHECK(back.lambda_u == 0.25);
  CHECK(back.eval_sliding_window);
  CHECK(back.crop_size == cfg.crop_size);
  CHECK_THROWS_AS(parse_train_config_json("{\"epochs\": -2}"), Error);
}
