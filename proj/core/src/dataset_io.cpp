#include "dhc/dataset_io.hpp"

#include <cstdio>
#include <fstream>

#include "dhc/volume_io.hpp"

namespace dhc {

namespace {

std::string numbered(const char* stem, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.dhcvol", stem, i);
  return buf;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "labeled", ec);
  fs::create_directories(dir / "unlabeled", ec);
  fs::create_directories(dir / "eval_labels", ec);

  {
    std::ofstream out(dir / "phantom_spec.json", std::ios::trunc);
    if (!out) fail(Errc::io_failure, "cannot write phantom_spec.json");
    out << phantom_spec_to_json(dataset.spec) << "\n";
  }
  for (std::size_t i = 0; i < dataset.labeled.size(); ++i) {
    write_volume(dir / "labeled" / numbered("volume", static_cast<int>(i)), dataset.labeled[i].volume);
    write_volume(dir / "labeled" / numbered("label", static_cast<int>(i)), dataset.labeled[i].labels);
  }
  for (std::size_t i = 0; i < dataset.unlabeled.size(); ++i) {
    write_volume(dir / "unlabeled" / numbered("volume", static_cast<int>(i)), dataset.unlabeled[i]);
    write_volume(dir / "eval_labels" / numbered("label", static_cast<int>(i)), dataset.unlabeled_gt[i]);
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream spec_in(dir / "phantom_spec.json");
  if (!spec_in) fail(Errc::io_failure, "missing phantom_spec.json in " + dir.string());
  std::string spec_text((std::istreambuf_iterator<char>(spec_in)), std::istreambuf_iterator<char>());

  Dataset ds{.labeled = {}, .unlabeled = {}, .unlabeled_gt = {}, .spec = parse_phantom_spec_json(spec_text)};

  for (int i = 0;; ++i) {
    const fs::path vol = dir / "labeled" / numbered("volume", i);
    if (!fs::exists(vol)) break;
    ds.labeled.push_back(LabeledSample{read_volume_f32(vol),
                                       read_label_map(dir / "labeled" / numbered("label", i))});
  }
  for (int i = 0;; ++i) {
    const fs::path vol = dir / "unlabeled" / numbered("volume", i);
    if (!fs::exists(vol)) break;
    ds.unlabeled.push_back(read_volume_f32(vol));
    const fs::path gt = dir / "eval_labels" / numbered("label", i);
    if (fs::exists(gt)) ds.unlabeled_gt.push_back(read_label_map(gt));
  }
  if (ds.labeled.empty() || ds.unlabeled.empty()) {
    fail(Errc::invalid_argument, "dataset must contain labeled and unlabeled samples");
  }
  return ds;
}

}  // namespace dhc
