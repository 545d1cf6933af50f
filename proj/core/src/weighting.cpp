#include "dhc/weighting.hpp"

#include <algorithm>
#include <cmath>

#include "dhc/csv.hpp"

namespace dhc {

ClassWeights uniform_weights(int num_classes) {
  if (num_classes < 2) fail(Errc::invalid_argument, "need at least 2 classes");
  return ClassWeights(std::vector<double>(static_cast<std::size_t>(num_classes), 1.0));
}

ClassWeights distdw_raw_weights(std::span<const std::int64_t> counts) {
  const int num_classes = static_cast<int>(counts.size());
  if (num_classes < 2) fail(Errc::invalid_argument, "need at least 2 classes");

  std::int64_t max_count = 1;
  for (std::int64_t c : counts) {
    if (c < 0) fail(Errc::invalid_argument, "counts must be non-negative");
    max_count = std::max(max_count, c);
  }

  std::vector<double> logs(static_cast<std::size_t>(num_classes));
  double max_log = 0.0;
  for (int k = 0; k < num_classes; ++k) {
    const std::int64_t clamped = std::max<std::int64_t>(counts[static_cast<std::size_t>(k)], 1);
    logs[static_cast<std::size_t>(k)] =
        std::log(static_cast<double>(max_count) / static_cast<double>(clamped));
    max_log = std::max(max_log, logs[static_cast<std::size_t>(k)]);
  }
  if (max_log == 0.0) return uniform_weights(num_classes);  // all counts equal

  for (double& l : logs) l /= max_log;
  return ClassWeights(std::move(logs));
}

const ClassWeights& distdw_update(DistDWState& state, std::span<const std::int64_t> counts) {
  ClassWeights raw = distdw_raw_weights(counts);
  if (!state.initialized) {
    state.weights = std::move(raw);
    state.initialized = true;
    return state.weights;
  }
  if (state.weights.size() != raw.size()) {
    fail(Errc::shape_mismatch, "count vector length changed between updates");
  }
  for (int k = 0; k < raw.size(); ++k) {
    state.weights.values[static_cast<std::size_t>(k)] =
        state.beta * state.weights.values[static_cast<std::size_t>(k)] +
        (1.0 - state.beta) * raw.values[static_cast<std::size_t>(k)];
  }
  return state.weights;
}

DiffDWState::DiffDWState(int num_classes, DiffDWConfig config)
    : num_classes_(num_classes), config_(config) {
  if (num_classes < 2) fail(Errc::invalid_argument, "need at least 2 classes");
  if (config.tau < 1) fail(Errc::invalid_argument, "tau must be >= 1");
  const auto k = static_cast<std::size_t>(num_classes);
  rings_.assign(k, std::vector<double>(static_cast<std::size_t>(config.tau + 1), 0.0));
  heads_.assign(k, 0);
  sizes_.assign(k, 0);
  records_seen_.assign(k, 0);
}

void DiffDWState::push(int cls, double dice) {
  auto& ring = rings_[static_cast<std::size_t>(cls)];
  int& head = heads_[static_cast<std::size_t>(cls)];
  int& size = sizes_[static_cast<std::size_t>(cls)];
  const int cap = config_.tau + 1;
  ring[static_cast<std::size_t>((head + size) % cap)] = dice;
  if (size < cap) {
    ++size;
  } else {
    head = (head + 1) % cap;
  }
  ++records_seen_[static_cast<std::size_t>(cls)];
}

std::vector<double> DiffDWState::history(int cls) const {
  const auto& ring = rings_[static_cast<std::size_t>(cls)];
  const int head = heads_[static_cast<std::size_t>(cls)];
  const int size = sizes_[static_cast<std::size_t>(cls)];
  const int cap = config_.tau + 1;
  std::vector<double> out(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    out[static_cast<std::size_t>(i)] = ring[static_cast<std::size_t>((head + i) % cap)];
  }
  return out;
}

void diffdw_record(DiffDWState& state, std::span<const double> dice,
                   std::span<const std::uint8_t> present) {
  const auto k = static_cast<std::size_t>(state.num_classes());
  if (dice.size() != k || present.size() != k) {
    fail(Errc::shape_mismatch, "dice/present length mismatch");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (!present[i]) continue;
    const double clamped = std::clamp(dice[i], kDiceClampMin, 1.0);
    state.push(static_cast<int>(i), clamped);
  }
}

ClassWeights diffdw_weights(const DiffDWState& state) {
  const int num_classes = state.num_classes();
  const DiffDWConfig& cfg = state.config();

  std::vector<double> raw(static_cast<std::size_t>(num_classes), -1.0);
  bool any = false;
  double max_raw = 0.0;
  for (int k = 0; k < num_classes; ++k) {
    const std::vector<double> hist = state.history(k);
    const int n = static_cast<int>(hist.size());
    if (n < 2) continue;

    double du = 0.0, dl = 0.0;
    for (int i = 1; i < n; ++i) {
      const double ratio = std::abs(std::log(hist[static_cast<std::size_t>(i)] /
                                             hist[static_cast<std::size_t>(i - 1)]));
      if (hist[static_cast<std::size_t>(i)] - hist[static_cast<std::size_t>(i - 1)] <= 0.0) {
        du += ratio;
      } else {
        dl += ratio;
      }
    }
    const double difficulty = (du + cfg.epsilon) / (dl + cfg.epsilon);

    const int window = std::min(cfg.tau, n);
    double reversed = 0.0;
    for (int i = n - window; i < n; ++i) reversed += 1.0 - hist[static_cast<std::size_t>(i)];
    // Floor keeps fully saturated classes at a positive weight.
    const double w_lambda = std::max(reversed / window, cfg.epsilon);

    const double r = w_lambda * std::pow(difficulty, cfg.alpha);
    raw[static_cast<std::size_t>(k)] = r;
    max_raw = std::max(max_raw, r);
    any = true;
  }

  if (!any || max_raw <= 0.0) return uniform_weights(num_classes);

  std::vector<double> out(static_cast<std::size_t>(num_classes));
  for (int k = 0; k < num_classes; ++k) {
    // Classes still warming up count as maximally difficult.
    const double r = raw[static_cast<std::size_t>(k)] < 0.0 ? max_raw : raw[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(k)] = r / max_raw;
  }
  return ClassWeights(std::move(out));
}

void append_weights_row(std::ostream& out, std::int64_t iteration, std::string_view strategy,
                        const ClassWeights& weights) {
  out << iteration << ',' << strategy;
  for (int k = 0; k < weights.size(); ++k) out << ',' << format_g6(weights[k]);
  out << '\n';
}

}  // namespace dhc
