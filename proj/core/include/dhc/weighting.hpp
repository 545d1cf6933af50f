#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "dhc/tensor.hpp"

namespace dhc {

// Dice values entering the difficulty tracker are clamped to at least this
// before log-ratios are formed.
inline constexpr double kDiceClampMin = 1e-3;

ClassWeights uniform_weights(int num_classes);

// Distribution-aware weights from per-class voxel counts: with
// P_k = max_i N_i / N_k, w_k = ln(P_k) / max_i ln(P_i). Zero counts are
// clamped to 1 first; all-equal counts give an all-ones vector. The
// largest class receives exactly 0 and the smallest exactly 1.
ClassWeights distdw_raw_weights(std::span<const std::int64_t> counts);

struct DistDWState {
  ClassWeights weights;  // EMA value, meaningful once initialized
  double beta = 0.99;
  bool initialized = false;
};

// EMA update toward the raw weights for the given counts. The first call
// adopts the raw weights directly; afterwards
// W <- beta * W_prev + (1 - beta) * W_raw. Returns the updated vector.
const ClassWeights& distdw_update(DistDWState& state, std::span<const std::int64_t> counts);

struct DiffDWConfig {
  int tau = 50;          // accumulation window (ring buffers hold tau+1 values)
  double epsilon = 1e-8; // smoothing in the learning-speed ratio
  double alpha = 0.2;    // difficulty exponent, tempers outliers
};

// Difficulty-aware weighting state: per-class ring buffers of recorded
// Dice values plus counters of how many values each class has ever seen.
class DiffDWState {
 public:
  DiffDWState(int num_classes, DiffDWConfig config = {});

  int num_classes() const { return num_classes_; }
  const DiffDWConfig& config() const { return config_; }

  // Recorded values for one class, oldest first (at most tau+1).
  std::vector<double> history(int cls) const;
  std::int64_t records_seen(int cls) const { return records_seen_[static_cast<std::size_t>(cls)]; }

  void push(int cls, double dice);

 private:
  int num_classes_;
  DiffDWConfig config_;
  std::vector<std::vector<double>> rings_;
  std::vector<int> heads_;
  std::vector<int> sizes_;
  std::vector<std::int64_t> records_seen_;
};

// Record one iteration's per-class Dice values. Only classes flagged
// present are recorded (absent classes keep their history frozen); values
// are clamped to [kDiceClampMin, 1].
void diffdw_record(DiffDWState& state, std::span<const double> dice,
                   std::span<const std::uint8_t> present);

// Difficulty weights from the recorded histories. Per class with at least
// two records, over consecutive window pairs:
//   du += |ln(l_t / l_{t-1})| when the Dice did not improve,
//   dl += |ln(l_t / l_{t-1})| when it improved,
//   d   = (du + eps) / (dl + eps),
//   w_l = mean of (1 - l) over the most recent tau values,
//   raw = w_l * d^alpha.
// Classes with fewer than two records take the maximum raw weight; the
// vector is normalized by its maximum. A state with no usable history
// returns all ones.
ClassWeights diffdw_weights(const DiffDWState& state);

// One CSV row per iteration: iteration, strategy, w_0..w_{K-1}.
void append_weights_row(std::ostream& out, std::int64_t iteration, std::string_view strategy,
                        const ClassWeights& weights);

}  // namespace dhc
