#include "dhc/losses.hpp"

#include <algorithm>
#include <cmath>

namespace dhc {

namespace {

void check_shapes(const Logits& logits, const LabelMap& target, const ClassWeights& weights) {
  if (logits.dims != target.dims()) fail(Errc::shape_mismatch, "logits/target dims mismatch");
  if (logits.num_classes != target.num_classes()) {
    fail(Errc::shape_mismatch, "logits/target class count mismatch");
  }
  if (weights.size() != logits.num_classes) {
    fail(Errc::shape_mismatch, "weight vector length mismatch");
  }
  const std::int64_t n = logits.dims.voxels();
  if (static_cast<std::int64_t>(logits.data.size()) != n * logits.num_classes) {
    fail(Errc::shape_mismatch, "logits payload does not match dims");
  }
}

}  // namespace

namespace detail {

std::vector<double> softmax_dense(const Logits& logits) {
  const std::int64_t n = logits.dims.voxels();
  const int num_classes = logits.num_classes;
  std::vector<double> probs(logits.data.size());
  for (std::int64_t v = 0; v < n; ++v) {
    double zmax = logits.data[static_cast<std::size_t>(v)];
    for (int k = 1; k < num_classes; ++k) {
      zmax = std::max(zmax, logits.data[static_cast<std::size_t>(k) * n + v]);
    }
    if (!std::isfinite(zmax)) fail(Errc::invalid_logits, "invalid logits");
    double sum = 0.0;
    for (int k = 0; k < num_classes; ++k) {
      const double e = std::exp(logits.data[static_cast<std::size_t>(k) * n + v] - zmax);
      probs[static_cast<std::size_t>(k) * n + v] = e;
      sum += e;
    }
    for (int k = 0; k < num_classes; ++k) {
      probs[static_cast<std::size_t>(k) * n + v] /= sum;
    }
  }
  return probs;
}

LossResult cross_entropy_with_probs(const Logits& logits, const std::vector<double>& probs,
                                    const LabelMap& target, const ClassWeights& weights) {
  const std::int64_t n = logits.dims.voxels();
  const int num_classes = logits.num_classes;
  const auto labels = target.data();

  double weight_mass = 0.0;
  for (std::int64_t v = 0; v < n; ++v) weight_mass += weights[labels[static_cast<std::size_t>(v)]];

  LossResult result;
  result.grad_logits.assign(logits.data.size(), 0.0);
  if (weight_mass <= 0.0) return result;

  double value = 0.0;
  for (std::int64_t v = 0; v < n; ++v) {
    const int t = labels[static_cast<std::size_t>(v)];
    const double w = weights[t];
    if (w == 0.0) continue;
    const double p_t = probs[static_cast<std::size_t>(t) * n + v];
    value += w * -std::log(std::max(p_t, kProbFloor));
    const double scale = w / weight_mass;
    for (int k = 0; k < num_classes; ++k) {
      const double p_k = probs[static_cast<std::size_t>(k) * n + v];
      result.grad_logits[static_cast<std::size_t>(k) * n + v] = scale * (p_k - (k == t ? 1.0 : 0.0));
    }
  }
  result.value = value / weight_mass;
  return result;
}

LossResult soft_dice_with_probs(const Logits& logits, const std::vector<double>& probs,
                                const LabelMap& target, const ClassWeights& weights) {
  const std::int64_t n = logits.dims.voxels();
  const int num_classes = logits.num_classes;
  const auto labels = target.data();

  double weight_mass = 0.0;
  for (int k = 0; k < num_classes; ++k) weight_mass += weights[k];

  LossResult result;
  result.grad_logits.assign(logits.data.size(), 0.0);
  if (weight_mass <= 0.0) return result;

  // Per class: numer_k = 2 <p_k, g_k> + s, denom_k = sum p_k + sum g_k + s.
  std::vector<double> numer(static_cast<std::size_t>(num_classes), kDiceSmooth);
  std::vector<double> denom(static_cast<std::size_t>(num_classes), kDiceSmooth);
  for (std::int64_t v = 0; v < n; ++v) {
    const int t = labels[static_cast<std::size_t>(v)];
    numer[static_cast<std::size_t>(t)] += 2.0 * probs[static_cast<std::size_t>(t) * n + v];
    denom[static_cast<std::size_t>(t)] += 1.0;
    for (int k = 0; k < num_classes; ++k) {
      denom[static_cast<std::size_t>(k)] += probs[static_cast<std::size_t>(k) * n + v];
    }
  }

  double value = 0.0;
  for (int k = 0; k < num_classes; ++k) {
    value += weights[k] * (1.0 - numer[static_cast<std::size_t>(k)] / denom[static_cast<std::size_t>(k)]);
  }
  result.value = value / weight_mass;

  // dL/dp_{k,v} = -(w_k / W) * (2 g_{k,v} denom_k - numer_k) / denom_k^2,
  // then through the softmax Jacobian:
  // dL/dz_{j,v} = p_j (dL/dp_j - sum_k dL/dp_k p_k).
  std::vector<double> dl_dp(static_cast<std::size_t>(num_classes));
  for (std::int64_t v = 0; v < n; ++v) {
    const int t = labels[static_cast<std::size_t>(v)];
    double dot = 0.0;
    for (int k = 0; k < num_classes; ++k) {
      const double g = (k == t) ? 1.0 : 0.0;
      const double dk = denom[static_cast<std::size_t>(k)];
      const double d_dice_dp = (2.0 * g * dk - numer[static_cast<std::size_t>(k)]) / (dk * dk);
      const double d = -(weights[k] / weight_mass) * d_dice_dp;
      dl_dp[static_cast<std::size_t>(k)] = d;
      dot += d * probs[static_cast<std::size_t>(k) * n + v];
    }
    for (int k = 0; k < num_classes; ++k) {
      const double p_k = probs[static_cast<std::size_t>(k) * n + v];
      result.grad_logits[static_cast<std::size_t>(k) * n + v] =
          p_k * (dl_dp[static_cast<std::size_t>(k)] - dot);
    }
  }
  return result;
}

LossResult pair_with_probs(const Logits& logits, const std::vector<double>& probs,
                           const LabelMap& pseudo, const ClassWeights& weights) {
  LossResult ce = cross_entropy_with_probs(logits, probs, pseudo, weights);
  LossResult dice = soft_dice_with_probs(logits, probs, pseudo, weights);
  LossResult result;
  result.value = 0.5 * (ce.value + dice.value);
  result.grad_logits.resize(ce.grad_logits.size());
  for (std::size_t i = 0; i < ce.grad_logits.size(); ++i) {
    result.grad_logits[i] = 0.5 * (ce.grad_logits[i] + dice.grad_logits[i]);
  }
  return result;
}

}  // namespace detail

LossResult weighted_cross_entropy(const Logits& logits, const LabelMap& target,
                                  const ClassWeights& weights) {
  check_shapes(logits, target, weights);
  return detail::cross_entropy_with_probs(logits, detail::softmax_dense(logits), target, weights);
}

LossResult soft_dice_loss(const Logits& logits, const LabelMap& target,
                          const ClassWeights& weights) {
  check_shapes(logits, target, weights);
  return detail::soft_dice_with_probs(logits, detail::softmax_dense(logits), target, weights);
}

LossResult unsupervised_pair_loss(const Logits& logits, const LabelMap& pseudo,
                                  const ClassWeights& weights) {
  check_shapes(logits, pseudo, weights);
  return detail::pair_with_probs(logits, detail::softmax_dense(logits), pseudo, weights);
}

}  // namespace dhc
