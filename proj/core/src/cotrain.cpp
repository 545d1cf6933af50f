#include "dhc/cotrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dhc/csv.hpp"
#include "dhc/losses.hpp"
#include "dhc/rng.hpp"

namespace dhc {

namespace {

constexpr std::uint64_t kStreamBatchPick = 301;
constexpr std::uint64_t kStreamAugment = 302;

struct ModelPass {
  Logits logits;
  std::vector<double> probs;   // dense double softmax
  LabelMap pseudo;             // argmax of logits
};

ModelPass run_model(const LinearModel& m, const FeatureField& feats) {
  Logits logits = forward_logits(m, feats);
  std::vector<double> probs = detail::softmax_dense(logits);
  LabelMap pseudo = argmax_labels(logits);
  return ModelPass{std::move(logits), std::move(probs), std::move(pseudo)};
}

ClassWeights weights_for(const CoTrainState& state, Strategy strategy) {
  switch (strategy) {
    case Strategy::uniform:
      return uniform_weights(state.a.model.num_classes);
    case Strategy::diffdw:
      return diffdw_weights(state.diffdw);
    case Strategy::distdw:
      return state.distdw.initialized ? state.distdw.weights
                                      : uniform_weights(state.a.model.num_classes);
  }
  fail(Errc::invalid_argument, "unknown strategy");
}

// Hard micro-Dice of the model's labeled-batch predictions against ground
// truth, pooled over the batch; present marks classes with ground-truth
// support.
void record_difficulty(DiffDWState& tracker, std::span<const ModelPass> passes,
                       std::span<const LabeledSample> labeled) {
  const int num_classes = tracker.num_classes();
  std::vector<std::int64_t> pred_count(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> gt_count(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> inter(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const auto pred = passes[i].pseudo.data();
    const auto gt = labeled[i].labels.data();
    for (std::size_t v = 0; v < pred.size(); ++v) {
      ++pred_count[pred[v]];
      ++gt_count[gt[v]];
      if (pred[v] == gt[v]) ++inter[pred[v]];
    }
  }
  std::vector<double> dice(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<std::uint8_t> present(static_cast<std::size_t>(num_classes), 0);
  for (int k = 0; k < num_classes; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    if (gt_count[idx] == 0) continue;
    present[idx] = 1;
    dice[idx] = 2.0 * static_cast<double>(inter[idx]) /
                static_cast<double>(pred_count[idx] + gt_count[idx]);
  }
  diffdw_record(tracker, dice, present);
}

// Per-sample losses for one model against ground truth (labeled part) and
// the peer's pseudo labels (all inputs). The supervised term averages over
// labeled samples, the unsupervised term over every input.
struct ModelLosses {
  double sup = 0.0;
  double unsup = 0.0;
  ParamGrads grads;
};

ModelLosses accumulate_losses(const LinearModel& model, std::span<const ModelPass> own,
                              std::span<const ModelPass> peer,
                              std::span<const FeatureField> feats,
                              std::span<const LabeledSample> labeled, const ClassWeights& weights,
                              double unsup_scale) {
  const std::size_t n_labeled = labeled.size();
  const std::size_t n_total = own.size();
  ModelLosses out;

  for (std::size_t i = 0; i < n_total; ++i) {
    std::vector<double> grad_logits(own[i].logits.data.size(), 0.0);
    if (i < n_labeled) {
      LossResult ce = detail::cross_entropy_with_probs(own[i].logits, own[i].probs,
                                                       labeled[i].labels, weights);
      out.sup += ce.value / static_cast<double>(n_labeled);
      const double scale = 1.0 / static_cast<double>(n_labeled);
      for (std::size_t j = 0; j < grad_logits.size(); ++j) grad_logits[j] += scale * ce.grad_logits[j];
    }
    LossResult pair =
        detail::pair_with_probs(own[i].logits, own[i].probs, peer[i].pseudo, weights);
    out.unsup += pair.value / static_cast<double>(n_total);
    const double scale = unsup_scale / static_cast<double>(n_total);
    if (scale != 0.0) {
      for (std::size_t j = 0; j < grad_logits.size(); ++j) grad_logits[j] += scale * pair.grad_logits[j];
    }
    Logits combined{own[i].logits.dims, own[i].logits.num_classes, std::move(grad_logits)};
    accumulate(out.grads, backward(model, feats[i], combined), 1.0);
  }
  return out;
}

struct Augment {
  int z0 = 0, y0 = 0, x0 = 0;
  Dims3 crop;
  bool flip_z = false, flip_y = false, flip_x = false;
};

Augment draw_augment(CounterRng& rng, const Dims3& dims, const Dims3& crop_size, bool flips) {
  Augment a;
  a.crop = {std::min(crop_size.d, dims.d), std::min(crop_size.h, dims.h),
            std::min(crop_size.w, dims.w)};
  a.z0 = static_cast<int>(rng.next_below(dims.d - a.crop.d + 1));
  a.y0 = static_cast<int>(rng.next_below(dims.h - a.crop.h + 1));
  a.x0 = static_cast<int>(rng.next_below(dims.w - a.crop.w + 1));
  if (flips) {
    a.flip_z = rng.next_bool();
    a.flip_y = rng.next_bool();
    a.flip_x = rng.next_bool();
  }
  return a;
}

template <typename T, typename Get>
std::vector<T> apply_augment(const Augment& a, const Dims3& /*dims*/, Get&& get) {
  std::vector<T> out(static_cast<std::size_t>(a.crop.voxels()));
  std::size_t i = 0;
  for (int z = 0; z < a.crop.d; ++z) {
    const int sz = a.z0 + (a.flip_z ? a.crop.d - 1 - z : z);
    for (int y = 0; y < a.crop.h; ++y) {
      const int sy = a.y0 + (a.flip_y ? a.crop.h - 1 - y : y);
      for (int x = 0; x < a.crop.w; ++x, ++i) {
        const int sx = a.x0 + (a.flip_x ? a.crop.w - 1 - x : x);
        out[i] = get(sz, sy, sx);
      }
    }
  }
  return out;
}

Volume augment_volume(const Augment& a, const Volume& v) {
  auto data = apply_augment<float>(a, v.dims(), [&](int z, int y, int x) { return v.at(z, y, x); });
  return Volume(a.crop, std::move(data), v.spacing());
}

LabelMap augment_labels(const Augment& a, const LabelMap& l) {
  auto data = apply_augment<std::uint8_t>(a, l.dims(),
                                          [&](int z, int y, int x) { return l.at(z, y, x); });
  return LabelMap(a.crop, l.num_classes(), std::move(data));
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::uniform: return "uniform";
    case Strategy::distdw: return "distdw";
    case Strategy::diffdw: return "diffdw";
  }
  fail(Errc::invalid_argument, "unknown strategy");
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "uniform") return Strategy::uniform;
  if (name == "distdw") return Strategy::distdw;
  if (name == "diffdw") return Strategy::diffdw;
  fail(Errc::invalid_argument, "unknown strategy: " + name);
}

TrainConfig parse_train_config_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::bad_header, std::string("invalid train config JSON: ") + e.what());
  }
  TrainConfig cfg;
  try {
    auto dims3 = [&](const char* key, Dims3 fallback) {
      if (!j.contains(key)) return fallback;
      return Dims3{j.at(key).at(0).get<int>(), j.at(key).at(1).get<int>(),
                   j.at(key).at(2).get<int>()};
    };
    if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<int>();
    if (j.contains("steps_per_epoch")) cfg.steps_per_epoch = j.at("steps_per_epoch").get<int>();
    if (j.contains("labeled_per_batch")) cfg.labeled_per_batch = j.at("labeled_per_batch").get<int>();
    if (j.contains("unlabeled_per_batch")) {
      cfg.unlabeled_per_batch = j.at("unlabeled_per_batch").get<int>();
    }
    if (j.contains("lambda_u")) cfg.lambda_u = j.at("lambda_u").get<double>();
    if (j.contains("rampup_epochs")) cfg.rampup_epochs = j.at("rampup_epochs").get<int>();
    cfg.crop_size = dims3("crop_size", cfg.crop_size);
    if (j.contains("flip_augment")) cfg.flip_augment = j.at("flip_augment").get<bool>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("strategy_a")) cfg.strategy_a = strategy_from_string(j.at("strategy_a").get<std::string>());
    if (j.contains("strategy_b")) cfg.strategy_b = strategy_from_string(j.at("strategy_b").get<std::string>());
    if (j.contains("distdw_beta")) cfg.distdw_beta = j.at("distdw_beta").get<double>();
    if (j.contains("diffdw_tau")) cfg.diffdw.tau = j.at("diffdw_tau").get<int>();
    if (j.contains("diffdw_epsilon")) cfg.diffdw.epsilon = j.at("diffdw_epsilon").get<double>();
    if (j.contains("diffdw_alpha")) cfg.diffdw.alpha = j.at("diffdw_alpha").get<double>();
    if (j.contains("lr0")) cfg.lr0 = j.at("lr0").get<double>();
    if (j.contains("momentum")) cfg.momentum = j.at("momentum").get<double>();
    if (j.contains("poly_power")) cfg.poly_power = j.at("poly_power").get<double>();
    if (j.contains("eval_sliding_window")) {
      cfg.eval_sliding_window = j.at("eval_sliding_window").get<bool>();
    }
    cfg.eval_window = dims3("eval_window", cfg.eval_window);
    cfg.eval_stride = dims3("eval_stride", cfg.eval_stride);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::bad_header, std::string("train config field error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["epochs"] = cfg.epochs;
  j["steps_per_epoch"] = cfg.steps_per_epoch;
  j["labeled_per_batch"] = cfg.labeled_per_batch;
  j["unlabeled_per_batch"] = cfg.unlabeled_per_batch;
  j["lambda_u"] = cfg.lambda_u;
  j["rampup_epochs"] = cfg.rampup_epochs;
  j["crop_size"] = {cfg.crop_size.d, cfg.crop_size.h, cfg.crop_size.w};
  j["flip_augment"] = cfg.flip_augment;
  j["seed"] = cfg.seed;
  j["strategy_a"] = to_string(cfg.strategy_a);
  j["strategy_b"] = to_string(cfg.strategy_b);
  j["distdw_beta"] = cfg.distdw_beta;
  j["diffdw_tau"] = cfg.diffdw.tau;
  j["diffdw_epsilon"] = cfg.diffdw.epsilon;
  j["diffdw_alpha"] = cfg.diffdw.alpha;
  j["lr0"] = cfg.lr0;
  j["momentum"] = cfg.momentum;
  j["poly_power"] = cfg.poly_power;
  j["eval_sliding_window"] = cfg.eval_sliding_window;
  j["eval_window"] = {cfg.eval_window.d, cfg.eval_window.h, cfg.eval_window.w};
  j["eval_stride"] = {cfg.eval_stride.d, cfg.eval_stride.h, cfg.eval_stride.w};
  return j.dump(2);
}

void TrainConfig::validate() const {
  if (epochs < 0) fail(Errc::invalid_argument, "epochs must be >= 0");
  if (steps_per_epoch < 1) fail(Errc::invalid_argument, "steps_per_epoch must be >= 1");
  if (labeled_per_batch < 1 || unlabeled_per_batch < 1) {
    fail(Errc::invalid_argument, "batch composition must be positive");
  }
  if (!(lambda_u >= 0.0)) fail(Errc::invalid_argument, "lambda_u must be >= 0");
  if (crop_size.d < 1 || crop_size.h < 1 || crop_size.w < 1) {
    fail(Errc::invalid_argument, "crop_size must be positive");
  }
  if (!(lr0 > 0.0)) fail(Errc::invalid_argument, "lr0 must be > 0");
  if (!(momentum >= 0.0) || momentum >= 1.0) fail(Errc::invalid_argument, "momentum in [0,1)");
}

double rampup(int epoch, int rampup_epochs) {
  if (rampup_epochs <= 0) fail(Errc::invalid_argument, "rampup_epochs must be > 0");
  if (epoch < 0) fail(Errc::invalid_argument, "epoch must be >= 0");
  const double t = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(rampup_epochs));
  return std::exp(-5.0 * (1.0 - t) * (1.0 - t));
}

CoTrainState init_cotrain(const TrainConfig& cfg, int num_classes) {
  cfg.validate();
  if (num_classes < 2) fail(Errc::invalid_argument, "need at least 2 classes");
  const std::int64_t total_steps =
      std::max<std::int64_t>(1, static_cast<std::int64_t>(cfg.epochs) * cfg.steps_per_epoch);

  auto make_sub = [&](std::uint64_t instance) {
    SubModel sub{init_linear_model(num_classes, kNumFeatures, cfg.seed, instance), OptState{}};
    sub.opt = make_opt_state(sub.model, total_steps);
    sub.opt.lr0 = cfg.lr0;
    sub.opt.momentum = cfg.momentum;
    sub.opt.poly_power = cfg.poly_power;
    return sub;
  };

  CoTrainState state{make_sub(1), make_sub(2), DiffDWState(num_classes, cfg.diffdw),
                     DistDWState{ClassWeights{}, cfg.distdw_beta, false}, 0, 0, cfg};
  return state;
}

StepReport train_step(CoTrainState& state, std::span<const LabeledSample> labeled_batch,
                      std::span<const Volume> unlabeled_batch) {
  const TrainConfig& cfg = state.cfg;
  if (static_cast<int>(labeled_batch.size()) != cfg.labeled_per_batch ||
      static_cast<int>(unlabeled_batch.size()) != cfg.unlabeled_per_batch) {
    fail(Errc::invalid_argument, "batch sizes do not match config");
  }
  const int num_classes = state.a.model.num_classes;
  for (const auto& s : labeled_batch) {
    if (s.labels.num_classes() != num_classes) {
      fail(Errc::shape_mismatch, "label class count does not match model");
    }
  }

  const std::size_t n_labeled = labeled_batch.size();
  const std::size_t n_total = n_labeled + unlabeled_batch.size();

  // (1) forward both models on labeled + unlabeled inputs.
  std::vector<FeatureField> feats;
  feats.reserve(n_total);
  for (const auto& s : labeled_batch) feats.push_back(extract_features(s.volume));
  for (const auto& v : unlabeled_batch) feats.push_back(extract_features(v));

  std::vector<ModelPass> pass_a, pass_b;
  pass_a.reserve(n_total);
  pass_b.reserve(n_total);
  for (const auto& f : feats) {
    pass_a.push_back(run_model(state.a.model, f));
    pass_b.push_back(run_model(state.b.model, f));
  }

  // (2) refresh weighting trackers. The difficulty tracker follows the
  // sub-model trained with diffdw weights (its own labeled-batch Dice);
  // the distribution tracker follows the sub-model trained with distdw
  // weights and counts the pseudo labels that supervise it, i.e. the
  // peer's, over the unlabeled inputs.
  if (cfg.strategy_a == Strategy::diffdw || cfg.strategy_b == Strategy::diffdw) {
    const auto& own = cfg.strategy_a == Strategy::diffdw ? pass_a : pass_b;
    record_difficulty(state.diffdw, {own.data(), n_labeled}, labeled_batch);
  }
  if (cfg.strategy_a == Strategy::distdw || cfg.strategy_b == Strategy::distdw) {
    const auto& peer = cfg.strategy_a == Strategy::distdw ? pass_b : pass_a;
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = n_labeled; i < n_total; ++i) {
      for (std::uint8_t v : peer[i].pseudo.data()) ++counts[v];
    }
    distdw_update(state.distdw, counts);
  }

  // (3) weight vectors per strategy.
  ClassWeights weights_a = weights_for(state, cfg.strategy_a);
  ClassWeights weights_b = weights_for(state, cfg.strategy_b);

  // (4) losses; pseudo-label targets are constants (no gradient crosses
  // to the peer).
  const double ramp = rampup(state.epoch, cfg.effective_rampup_epochs());
  const double unsup_scale = cfg.lambda_u * ramp;
  ModelLosses loss_a =
      accumulate_losses(state.a.model, pass_a, pass_b, feats, labeled_batch, weights_a, unsup_scale);
  ModelLosses loss_b =
      accumulate_losses(state.b.model, pass_b, pass_a, feats, labeled_batch, weights_b, unsup_scale);

  // (5) one SGD step per model.
  sgd_step(state.a.model, loss_a.grads, state.a.opt);
  sgd_step(state.b.model, loss_b.grads, state.b.opt);

  StepReport report;
  report.iteration = state.iteration++;
  report.ramp = ramp;
  report.sup_a = loss_a.sup;
  report.unsup_a = loss_a.unsup;
  report.total_a = loss_a.sup + unsup_scale * loss_a.unsup;
  report.sup_b = loss_b.sup;
  report.unsup_b = loss_b.unsup;
  report.total_b = loss_b.sup + unsup_scale * loss_b.unsup;
  report.weights_a = std::move(weights_a);
  report.weights_b = std::move(weights_b);
  return report;
}

ProbMap infer(const CoTrainState& state, const Volume& v) {
  const FeatureField feats = extract_features(v);
  const Logits za = forward_logits(state.a.model, feats);
  const Logits zb = forward_logits(state.b.model, feats);
  const std::vector<double> pa = detail::softmax_dense(za);
  const std::vector<double> pb = detail::softmax_dense(zb);
  std::vector<float> mean(pa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    mean[i] = static_cast<float>(0.5 * (pa[i] + pb[i]));
  }
  return ProbMap(v.dims(), state.a.model.num_classes, std::move(mean));
}

std::vector<int> window_starts(int extent, int window, int stride) {
  if (stride <= 0) fail(Errc::invalid_argument, "stride must be positive");
  if (window <= 0 || window > extent) fail(Errc::invalid_argument, "window must fit the volume");
  std::vector<int> starts;
  for (int s = 0; s + window < extent; s += stride) starts.push_back(s);
  starts.push_back(extent - window);  // clamp the final window to the border
  return starts;
}

ProbMap sliding_window_infer(const CoTrainState& state, const Volume& v, Dims3 window,
                             Dims3 stride) {
  const Dims3 dims = v.dims();
  const auto zs = window_starts(dims.d, window.d, stride.d);
  const auto ys = window_starts(dims.h, window.h, stride.h);
  const auto xs = window_starts(dims.w, window.w, stride.w);

  const int num_classes = state.a.model.num_classes;
  const std::int64_t n = dims.voxels();
  std::vector<double> sum(static_cast<std::size_t>(n) * num_classes, 0.0);
  std::vector<std::int32_t> cover(static_cast<std::size_t>(n), 0);

  for (int z0 : zs) {
    for (int y0 : ys) {
      for (int x0 : xs) {
        Augment crop{z0, y0, x0, window, false, false, false};
        const Volume piece = augment_volume(crop, v);
        const ProbMap probs = infer(state, piece);
        const std::int64_t wn = window.voxels();
        for (int k = 0; k < num_classes; ++k) {
          for (std::int64_t i = 0; i < wn; ++i) {
            const int z = static_cast<int>(i / (window.h * window.w));
            const int rem = static_cast<int>(i % (window.h * window.w));
            const int y = rem / window.w;
            const int x = rem % window.w;
            const std::int64_t dst =
                (static_cast<std::int64_t>(z0 + z) * dims.h + (y0 + y)) * dims.w + (x0 + x);
            sum[static_cast<std::size_t>(k) * n + dst] += probs.at(k, i);
          }
        }
        for (std::int64_t i = 0; i < wn; ++i) {
          const int z = static_cast<int>(i / (window.h * window.w));
          const int rem = static_cast<int>(i % (window.h * window.w));
          const int y = rem / window.w;
          const int x = rem % window.w;
          ++cover[static_cast<std::size_t>(
              (static_cast<std::int64_t>(z0 + z) * dims.h + (y0 + y)) * dims.w + (x0 + x))];
        }
      }
    }
  }

  std::vector<float> out(sum.size());
  for (int k = 0; k < num_classes; ++k) {
    for (std::int64_t i = 0; i < n; ++i) {
      out[static_cast<std::size_t>(k) * n + i] = static_cast<float>(
          sum[static_cast<std::size_t>(k) * n + i] / cover[static_cast<std::size_t>(i)]);
    }
  }
  return ProbMap(dims, num_classes, std::move(out));
}

ExperimentResult run_experiment(const TrainConfig& cfg, const Dataset& dataset,
                                const std::filesystem::path& out_dir) {
  cfg.validate();
  if (dataset.labeled.empty() || dataset.unlabeled.empty()) {
    fail(Errc::invalid_argument, "dataset must contain labeled and unlabeled samples");
  }
  if (dataset.unlabeled_gt.size() != dataset.unlabeled.size()) {
    fail(Errc::invalid_argument, "evaluation ground truth missing for unlabeled split");
  }
  const int num_classes = dataset.spec.num_classes;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::ofstream losses_csv(out_dir / "losses.csv", std::ios::trunc);
  std::ofstream weights_csv(out_dir / "weights.csv", std::ios::trunc);
  std::ofstream metrics_csv(out_dir / "metrics.csv", std::ios::trunc);
  if (!losses_csv || !weights_csv || !metrics_csv) {
    fail(Errc::io_failure, "cannot open CSV logs under " + out_dir.string());
  }
  losses_csv << "iteration,model,sup,unsup,total,ramp\n";
  weights_csv << "iteration,strategy";
  for (int k = 0; k < num_classes; ++k) weights_csv << ",w_" << k;
  weights_csv << '\n';
  metrics_csv << "epoch,model,class,dice,asd\n";

  CoTrainState state = init_cotrain(cfg, num_classes);

  MetricsLog log;
  log.losses_csv = out_dir / "losses.csv";
  log.weights_csv = out_dir / "weights.csv";
  log.metrics_csv = out_dir / "metrics.csv";

  auto evaluate_epoch = [&](int epoch) {
    const auto reports = evaluate(state, dataset.unlabeled, dataset.unlabeled_gt);
    const ClassReport agg = aggregate_reports(reports);
    for (int k = 1; k < num_classes; ++k) {
      metrics_csv << epoch << ",ensemble," << k << ','
                  << format_g6(agg.dice[static_cast<std::size_t>(k)]) << ','
                  << format_g6(agg.asd[static_cast<std::size_t>(k)]) << '\n';
    }
    log.evals.push_back(EpochEval{epoch, agg});
  };

  evaluate_epoch(0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    state.epoch = epoch;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      const std::uint64_t iter = static_cast<std::uint64_t>(state.iteration);
      CounterRng pick(cfg.seed, iter, kStreamBatchPick);
      CounterRng aug(cfg.seed, iter, kStreamAugment);

      std::vector<LabeledSample> labeled_batch;
      labeled_batch.reserve(static_cast<std::size_t>(cfg.labeled_per_batch));
      for (int i = 0; i < cfg.labeled_per_batch; ++i) {
        const auto& src = dataset.labeled[static_cast<std::size_t>(
            pick.next_below(static_cast<std::int64_t>(dataset.labeled.size())))];
        const Augment a = draw_augment(aug, src.volume.dims(), cfg.crop_size, cfg.flip_augment);
        labeled_batch.push_back(
            LabeledSample{augment_volume(a, src.volume), augment_labels(a, src.labels)});
      }
      std::vector<Volume> unlabeled_batch;
      unlabeled_batch.reserve(static_cast<std::size_t>(cfg.unlabeled_per_batch));
      for (int i = 0; i < cfg.unlabeled_per_batch; ++i) {
        const auto& src = dataset.unlabeled[static_cast<std::size_t>(
            pick.next_below(static_cast<std::int64_t>(dataset.unlabeled.size())))];
        const Augment a = draw_augment(aug, src.dims(), cfg.crop_size, cfg.flip_augment);
        unlabeled_batch.push_back(augment_volume(a, src));
      }

      const StepReport report = train_step(state, labeled_batch, unlabeled_batch);
      losses_csv << report.iteration << ",a," << format_g6(report.sup_a) << ','
                 << format_g6(report.unsup_a) << ',' << format_g6(report.total_a) << ','
                 << format_g6(report.ramp) << '\n';
      losses_csv << report.iteration << ",b," << format_g6(report.sup_b) << ','
                 << format_g6(report.unsup_b) << ',' << format_g6(report.total_b) << ','
                 << format_g6(report.ramp) << '\n';
      append_weights_row(weights_csv, report.iteration, to_string(cfg.strategy_a), report.weights_a);
      append_weights_row(weights_csv, report.iteration, to_string(cfg.strategy_b), report.weights_b);
    }
    evaluate_epoch(epoch + 1);
  }

  return ExperimentResult{std::move(log), std::move(state)};
}

}  // namespace dhc
