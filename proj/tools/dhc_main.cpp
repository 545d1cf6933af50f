// dhc command-line tool: generate synthetic datasets, run co-training
// experiments, evaluate checkpoints. Exit codes: 0 success, 1 runtime
// failure, 2 usage error.

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dhc/cotrain.hpp"
#include "dhc/csv.hpp"
#include "dhc/dataset_io.hpp"
#include "dhc/metrics.hpp"
#include "dhc/model.hpp"
#include "dhc/volume_io.hpp"

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw dhc::Error(dhc::Errc::io_failure, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw dhc::Error(dhc::Errc::io_failure, "cannot write " + path.string());
  out << text;
}

// Run manifest: written with status "running" before the work starts and
// finalized afterwards. Artifact paths are relative to the output dir.
class Manifest {
 public:
  Manifest(std::filesystem::path out_dir, std::string command, nlohmann::json config,
           std::uint64_t seed)
      : out_dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["tool_version"] = kToolVersion;
    doc_["seed"] = seed;
    doc_["config"] = std::move(config);
    doc_["artifacts"] = nlohmann::json::array();
    doc_["status"] = "running";
    flush();
  }

  void add_artifact(const std::string& relative_path) { doc_["artifacts"].push_back(relative_path); }

  void finalize() {
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    doc_["status"] = "complete";
    doc_["duration_seconds"] =
        std::chrono::duration_cast<std::chrono::duration<double>>(elapsed).count();
    flush();
  }

 private:
  void flush() { write_text_file(out_dir_ / "manifest.json", doc_.dump(2) + "\n"); }

  std::filesystem::path out_dir_;
  nlohmann::json doc_;
  std::chrono::steady_clock::time_point start_;
};

int cmd_generate(const std::string& spec_path, int n_labeled, int n_unlabeled,
                 const std::string& out_dir) {
  const dhc::PhantomSpec spec = dhc::parse_phantom_spec_json(read_text_file(spec_path));
  std::filesystem::create_directories(out_dir);
  Manifest manifest(out_dir, "generate", nlohmann::json::parse(dhc::phantom_spec_to_json(spec)),
                    spec.seed);

  const dhc::Dataset dataset = dhc::make_dataset(spec, n_labeled, n_unlabeled);
  dhc::save_dataset(dataset, out_dir);

  manifest.add_artifact("phantom_spec.json");
  for (std::size_t i = 0; i < dataset.labeled.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "labeled/volume_%03zu.dhcvol", i);
    manifest.add_artifact(buf);
    std::snprintf(buf, sizeof(buf), "labeled/label_%03zu.dhcvol", i);
    manifest.add_artifact(buf);
  }
  for (std::size_t i = 0; i < dataset.unlabeled.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "unlabeled/volume_%03zu.dhcvol", i);
    manifest.add_artifact(buf);
    std::snprintf(buf, sizeof(buf), "eval_labels/label_%03zu.dhcvol", i);
    manifest.add_artifact(buf);
  }
  manifest.finalize();

  double max_ratio = 0.0;
  for (const auto& sample : dataset.labeled) {
    max_ratio = std::max(max_ratio, dhc::imbalance_ratio(sample.labels));
  }
  std::cout << "generated " << dataset.labeled.size() << " labeled + " << dataset.unlabeled.size()
            << " unlabeled volumes under " << out_dir << " (imbalance ratio up to "
            << dhc::format_g6(max_ratio) << ")\n";
  return 0;
}

void print_report_table(const dhc::ClassReport& report, int num_classes) {
  std::cout << std::left << std::setw(8) << "metric";
  for (int k = 1; k < num_classes; ++k) {
    std::cout << std::setw(12) << ("class_" + std::to_string(k));
  }
  std::cout << std::setw(12) << "mean" << '\n';

  std::cout << std::left << std::setw(8) << "dice";
  for (int k = 1; k < num_classes; ++k) {
    std::cout << std::setw(12) << dhc::format_g6(report.dice[static_cast<std::size_t>(k)]);
  }
  std::cout << std::setw(12) << dhc::format_g6(report.mean_dice) << '\n';

  std::cout << std::left << std::setw(8) << "asd";
  for (int k = 1; k < num_classes; ++k) {
    std::cout << std::setw(12) << dhc::format_g6(report.asd[static_cast<std::size_t>(k)]);
  }
  std::cout << std::setw(12) << dhc::format_g6(report.mean_asd) << '\n';
}

int cmd_train(const std::string& data_dir, const std::string& out_dir,
              const std::string& config_path, const std::string& strategy_a,
              const std::string& strategy_b, int epochs, int steps_per_epoch,
              std::int64_t seed) {
  dhc::TrainConfig cfg;
  if (!config_path.empty()) cfg = dhc::parse_train_config_json(read_text_file(config_path));
  // CLI overrides win over the config file.
  if (!strategy_a.empty()) cfg.strategy_a = dhc::strategy_from_string(strategy_a);
  if (!strategy_b.empty()) cfg.strategy_b = dhc::strategy_from_string(strategy_b);
  if (epochs >= 0) cfg.epochs = epochs;
  if (steps_per_epoch > 0) cfg.steps_per_epoch = steps_per_epoch;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.validate();

  const dhc::Dataset dataset = dhc::load_dataset(data_dir);
  std::filesystem::create_directories(out_dir);
  Manifest manifest(out_dir, "train", nlohmann::json::parse(dhc::train_config_to_json(cfg)),
                    cfg.seed);
  write_text_file(std::filesystem::path(out_dir) / "train_config.json",
                  dhc::train_config_to_json(cfg) + "\n");

  dhc::ExperimentResult result = dhc::run_experiment(cfg, dataset, out_dir);
  dhc::save_checkpoint(std::filesystem::path(out_dir) / "checkpoint.dhcmdl", result.state.a.model,
                       result.state.b.model);

  manifest.add_artifact("train_config.json");
  manifest.add_artifact("losses.csv");
  manifest.add_artifact("weights.csv");
  manifest.add_artifact("metrics.csv");
  manifest.add_artifact("checkpoint.dhcmdl");
  manifest.finalize();

  if (!result.log.evals.empty()) {
    const auto& final_eval = result.log.evals.back();
    std::cout << "final evaluation (epoch " << final_eval.epoch << ")\n";
    print_report_table(final_eval.ensemble, dataset.spec.num_classes);
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& out_dir, bool sliding_window, const std::vector<int>& window,
             const std::vector<int>& stride) {
  const dhc::Dataset dataset = dhc::load_dataset(data_dir);
  auto [model_a, model_b] = dhc::load_checkpoint(checkpoint_path);
  if (model_a.num_classes != dataset.spec.num_classes) {
    throw dhc::Error(dhc::Errc::shape_mismatch, "checkpoint class count does not match dataset");
  }

  dhc::TrainConfig cfg;
  cfg.epochs = 0;
  cfg.eval_sliding_window = sliding_window;
  if (window.size() == 3) cfg.eval_window = {window[0], window[1], window[2]};
  if (stride.size() == 3) cfg.eval_stride = {stride[0], stride[1], stride[2]};
  dhc::CoTrainState state = dhc::init_cotrain(cfg, model_a.num_classes);
  state.a.model = std::move(model_a);
  state.b.model = std::move(model_b);

  const auto reports = dhc::evaluate(state, dataset.unlabeled, dataset.unlabeled_gt);
  const dhc::ClassReport agg = dhc::aggregate_reports(reports);
  print_report_table(agg, dataset.spec.num_classes);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    Manifest manifest(out_dir, "eval", {{"checkpoint", checkpoint_path}, {"data", data_dir}}, 0);
    std::ofstream metrics(std::filesystem::path(out_dir) / "metrics.csv", std::ios::trunc);
    metrics << "epoch,model,class,dice,asd\n";
    for (int k = 1; k < dataset.spec.num_classes; ++k) {
      metrics << "0,ensemble," << k << ',' << dhc::format_g6(agg.dice[static_cast<std::size_t>(k)])
              << ',' << dhc::format_g6(agg.asd[static_cast<std::size_t>(k)]) << '\n';
    }
    manifest.add_artifact("metrics.csv");
    manifest.finalize();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-debiased heterogeneous co-training lab for class-imbalanced "
               "semi-supervised voxel segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // generate
  auto* generate = app.add_subcommand("generate", "Generate a synthetic phantom dataset");
  std::string gen_spec, gen_out;
  int gen_labeled = 2, gen_unlabeled = 8;
  generate->add_option("--spec", gen_spec, "Phantom spec JSON file")->required();
  generate->add_option("--labeled", gen_labeled, "Number of labeled samples");
  generate->add_option("--unlabeled", gen_unlabeled, "Number of unlabeled samples");
  generate->add_option("--out", gen_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Run a co-training experiment");
  std::string train_data, train_out, train_config, train_sa, train_sb;
  int train_epochs = -1, train_steps = -1;
  std::int64_t train_seed = -1;
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--config", train_config, "Train config JSON file");
  train->add_option("--strategy-a", train_sa, "Weighting for sub-model A: uniform|distdw|diffdw");
  train->add_option("--strategy-b", train_sb, "Weighting for sub-model B: uniform|distdw|diffdw");
  train->add_option("--epochs", train_epochs, "Override epoch count");
  train->add_option("--steps-per-epoch", train_steps, "Override steps per epoch");
  train->add_option("--seed", train_seed, "Override RNG seed");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's held-out split");
  std::string eval_ckpt, eval_data, eval_out;
  bool eval_sliding = false;
  std::vector<int> eval_window, eval_stride;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--out", eval_out, "Optional output directory for metrics.csv");
  eval->add_flag("--sliding-window", eval_sliding, "Use sliding-window inference");
  eval->add_option("--window", eval_window, "Sliding window size: D H W")->expected(3);
  eval->add_option("--stride", eval_stride, "Sliding window stride: D H W")->expected(3);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // help/version exit 0, any usage problem exits 2
  }

  try {
    if (*generate) return cmd_generate(gen_spec, gen_labeled, gen_unlabeled, gen_out);
    if (*train) {
      return cmd_train(train_data, train_out, train_config, train_sa, train_sb, train_epochs,
                       train_steps, train_seed);
    }
    if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_out, eval_sliding, eval_window, eval_stride);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
