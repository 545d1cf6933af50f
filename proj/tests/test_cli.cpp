// Drives the installed CLI binary end to end through std::system.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dhc/cotrain.hpp"
#include "dhc/csv.hpp"
#include "dhc/dataset_io.hpp"
#include "dhc/model.hpp"
#include "dhc/phantom.hpp"

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return DHC_CLI_PATH; }

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out_file =
      fs::temp_directory_path() / ("dhc_cli_out_" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(cli_path()) + " " + args + " > " + out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  result.output = ss.str();
  return result;
}

fs::path workspace() {
  const fs::path dir = fs::temp_directory_path() / "dhc_cli_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

fs::path write_spec_json() {
  dhc::PhantomSpec spec;
  spec.dims = {12, 12, 12};
  spec.num_classes = 3;
  spec.target_fractions = {0.8, 0.13, 0.07};
  spec.shape_kinds = {dhc::ShapeKind::sphere, dhc::ShapeKind::sphere, dhc::ShapeKind::box};
  spec.intensity_means = {0.0, 0.5, 1.0};
  spec.noise_sigma = 0.0;
  spec.seed = 12345;
  const fs::path path = workspace() / "spec.json";
  std::ofstream out(path, std::ios::trunc);
  out << dhc::phantom_spec_to_json(spec) << "\n";
  return path;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

TEST_CASE("generate writes the dataset and manifest, deterministically") {
  const fs::path spec = write_spec_json();
  const fs::path out = workspace() / "data";
  fs::remove_all(out);

  const RunResult r = run_cli("generate --spec " + spec.string() + " --labeled 2 --unlabeled 8 --out " + out.string());
  CHECK(r.exit_code == 0);

  int volume_files = 0;
  for (int i = 0; i < 2; ++i) {
    CHECK(fs::exists(out / "labeled" / ("volume_00" + std::to_string(i) + ".dhcvol")));
    CHECK(fs::exists(out / "labeled" / ("label_00" + std::to_string(i) + ".dhcvol")));
    ++volume_files;
  }
  for (int i = 0; i < 8; ++i) {
    CHECK(fs::exists(out / "unlabeled" / ("volume_00" + std::to_string(i) + ".dhcvol")));
    CHECK(fs::exists(out / "eval_labels" / ("label_00" + std::to_string(i) + ".dhcvol")));
    ++volume_files;
  }
  CHECK(volume_files == 10);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(slurp(out / "manifest.json").find("\"status\": \"complete\"") != std::string::npos);

  // Rerun into a second directory: identical dataset bytes.
  const fs::path out2 = workspace() / "data_rerun";
  fs::remove_all(out2);
  const RunResult r2 = run_cli("generate --spec " + spec.string() + " --labeled 2 --unlabeled 8 --out " + out2.string());
  CHECK(r2.exit_code == 0);
  CHECK(slurp(out / "labeled" / "volume_000.dhcvol") == slurp(out2 / "labeled" / "volume_000.dhcvol"));
  CHECK(slurp(out / "unlabeled" / "volume_003.dhcvol") == slurp(out2 / "unlabeled" / "volume_003.dhcvol"));
}

TEST_CASE("usage errors exit 2") {
  const fs::path spec = write_spec_json();
  CHECK(run_cli("generate --spec " + spec.string()).exit_code == 2);  // missing --out
  CHECK(run_cli("nonsense").exit_code == 2);
  CHECK(run_cli("train --data nowhere").exit_code == 2);  // missing --out
}

TEST_CASE("runtime failures exit 1") {
  const fs::path out = workspace() / "should_not_exist";
  CHECK(run_cli("generate --spec /nonexistent.json --out " + out.string()).exit_code == 1);
  CHECK(run_cli("eval --checkpoint /nonexistent.dhcmdl --data nowhere").exit_code == 1);
}

TEST_CASE("train produces artifacts; epochs 0 is evaluation-only") {
  const fs::path spec = write_spec_json();
  const fs::path data = workspace() / "train_data";
  if (!fs::exists(data / "phantom_spec.json")) {
    REQUIRE(run_cli("generate --spec " + spec.string() + " --labeled 2 --unlabeled 3 --out " + data.string()).exit_code == 0);
  }

  const fs::path run1 = workspace() / "run1";
  fs::remove_all(run1);
  const RunResult r = run_cli("train --data " + data.string() + " --out " + run1.string() +
                              " --strategy-a diffdw --strategy-b distdw --epochs 2 --steps-per-epoch 2 --seed 5");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(run1 / "losses.csv"));
  CHECK(fs::exists(run1 / "weights.csv"));
  CHECK(fs::exists(run1 / "metrics.csv"));
  CHECK(fs::exists(run1 / "checkpoint.dhcmdl"));
  CHECK(fs::exists(run1 / "manifest.json"));
  CHECK(fs::exists(run1 / "train_config.json"));

  // weights.csv carries the strategy names that were routed.
  const std::string weights = slurp(run1 / "weights.csv");
  CHECK(weights.find(",diffdw,") != std::string::npos);
  CHECK(weights.find(",distdw,") != std::string::npos);

  // Rerun with identical inputs: byte-identical CSVs.
  const fs::path run1b = workspace() / "run1b";
  fs::remove_all(run1b);
  REQUIRE(run_cli("train --data " + data.string() + " --out " + run1b.string() +
                  " --strategy-a diffdw --strategy-b distdw --epochs 2 --steps-per-epoch 2 --seed 5")
              .exit_code == 0);
  CHECK(slurp(run1 / "losses.csv") == slurp(run1b / "losses.csv"));
  CHECK(slurp(run1 / "weights.csv") == slurp(run1b / "weights.csv"));
  CHECK(slurp(run1 / "metrics.csv") == slurp(run1b / "metrics.csv"));

  const fs::path run0 = workspace() / "run0";
  fs::remove_all(run0);
  REQUIRE(run_cli("train --data " + data.string() + " --out " + run0.string() + " --epochs 0").exit_code == 0);
  const std::string losses = slurp(run0 / "losses.csv");
  CHECK(losses == "iteration,model,sup,unsup,total,ramp\n");
  const std::string metrics = slurp(run0 / "metrics.csv");
  CHECK(metrics.find("\n0,ensemble,1,") != std::string::npos);
}

TEST_CASE("eval of a hand-built perfect checkpoint reports dice 1") {
  // Noise-free dataset whose classes are fully determined by intensity;
  // a linear head with logits s*(2*mu_k*I - mu_k^2) picks the nearest
  // class mean, so prediction equals ground truth everywhere.
  const fs::path spec = write_spec_json();
  const fs::path data = workspace() / "eval_data";
  if (!fs::exists(data / "phantom_spec.json")) {
    REQUIRE(run_cli("generate --spec " + spec.string() + " --labeled 1 --unlabeled 2 --out " + data.string()).exit_code == 0);
  }

  const double means[3] = {0.0, 0.5, 1.0};
  dhc::LinearModel oracle_model;
  oracle_model.num_classes = 3;
  oracle_model.num_features = dhc::kNumFeatures;
  oracle_model.weight.assign(3 * dhc::kNumFeatures, 0.0);
  oracle_model.bias.assign(3, 0.0);
  const double sharpness = 50.0;
  for (int k = 0; k < 3; ++k) {
    oracle_model.weight[static_cast<std::size_t>(k) * dhc::kNumFeatures] = sharpness * 2.0 * means[k];
    oracle_model.bias[static_cast<std::size_t>(k)] = -sharpness * means[k] * means[k];
  }
  const fs::path ckpt = workspace() / "oracle.dhcmdl";
  dhc::save_checkpoint(ckpt, oracle_model, oracle_model);

  const fs::path eval_out = workspace() / "eval_out";
  fs::remove_all(eval_out);
  const RunResult r = run_cli("eval --checkpoint " + ckpt.string() + " --data " + data.string() +
                              " --out " + eval_out.string());
  CHECK(r.exit_code == 0);

  // Table: header + dice row + asd row; data rows have (K-1) class
  // columns plus the metric label and the mean.
  std::vector<std::string> lines;
  {
    std::stringstream ss(r.output);
    std::string line;
    while (std::getline(ss, line)) {
      if (!line.empty()) lines.push_back(line);
    }
  }
  REQUIRE(lines.size() >= 3);
  const auto row_fields = [](const std::string& line) {
    std::stringstream ss(line);
    std::vector<std::string> fields;
    std::string f;
    while (ss >> f) fields.push_back(f);
    return fields;
  };
  const auto dice_row = row_fields(lines[lines.size() - 2]);
  const auto asd_row = row_fields(lines[lines.size() - 1]);
  CHECK(dice_row.size() == 2 + 2);  // label + K-1 classes + mean
  CHECK(asd_row.size() == 2 + 2);
  CHECK(dice_row[0] == "dice");
  CHECK(dice_row[1] == "1");
  CHECK(dice_row[2] == "1");
  CHECK(dice_row[3] == "1");  // mean dice 1.0
  CHECK(asd_row[3] == "0");   // mean asd 0.0

  // CSV agrees with the table.
  const std::string metrics = slurp(eval_out / "metrics.csv");
  std::stringstream ss(metrics);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "epoch,model,class,dice,asd");
  int rows = 0;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    REQUIRE(fields.size() == 5);
    CHECK(fields[1] == "ensemble");
    CHECK(fields[3] == dice_row[1 + rows]);
    CHECK(fields[4] == "0");
    ++rows;
  }
  CHECK(rows == 2);

  // The oracle model reads only raw intensity, so sliding-window
  // inference agrees with the full-volume result.
  const RunResult sw = run_cli("eval --checkpoint " + ckpt.string() + " --data " + data.string() +
                               " --sliding-window --window 8 8 8 --stride 4 4 4");
  CHECK(sw.exit_code == 0);
  CHECK(sw.output.find("dice    1") != std::string::npos);
}
