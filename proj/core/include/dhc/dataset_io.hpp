#pragma once

#include <filesystem>

#include "dhc/phantom.hpp"

namespace dhc {

// On-disk dataset layout under a root directory:
//   phantom_spec.json
//   labeled/volume_###.dhcvol + labeled/label_###.dhcvol
//   unlabeled/volume_###.dhcvol
//   eval_labels/label_###.dhcvol   (ground truth of the unlabeled split,
//                                   kept for evaluation only)
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace dhc
