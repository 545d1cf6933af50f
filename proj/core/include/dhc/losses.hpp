#pragma once

#include <vector>

#include "dhc/tensor.hpp"

namespace dhc {

// Smoothing constant in the soft-Dice denominator/numerator; keeps empty
// classes finite.
inline constexpr double kDiceSmooth = 1e-5;
// Probabilities are floored at this value inside log() so saturated
// predictions keep finite loss values.
inline constexpr double kProbFloor = 1e-12;

struct LossResult {
  double value = 0.0;
  std::vector<double> grad_logits;  // same layout as the logits argument
};

// Class-weighted cross entropy, normalized by the total weight mass over
// voxels: sum_v w[t_v] * (-log p_v[t_v]) / sum_v w[t_v]. Zero weight mass
// yields a zero loss and gradient. The gradient is the exact derivative
// through softmax.
LossResult weighted_cross_entropy(const Logits& logits, const LabelMap& target,
                                  const ClassWeights& weights);

// Class-weighted soft Dice loss: per class d_k = (2 <p_k, g_k> + s) /
// (sum p_k + sum g_k + s) against one-hot targets, loss =
// sum_k w_k (1 - d_k) / sum_k w_k, with exact gradient through softmax.
LossResult soft_dice_loss(const Logits& logits, const LabelMap& target,
                          const ClassWeights& weights);

// Consistency loss against a peer model's hard pseudo labels:
// 0.5 * (cross entropy + soft Dice), values and gradients.
LossResult unsupervised_pair_loss(const Logits& logits, const LabelMap& pseudo,
                                  const ClassWeights& weights);

namespace detail {

// Dense per-voxel softmax in double precision, channel-major like Logits.
std::vector<double> softmax_dense(const Logits& logits);

// Cores taking precomputed probabilities; train loops reuse one softmax
// evaluation across the CE and Dice terms.
LossResult cross_entropy_with_probs(const Logits& logits, const std::vector<double>& probs,
                                    const LabelMap& target, const ClassWeights& weights);
LossResult soft_dice_with_probs(const Logits& logits, const std::vector<double>& probs,
                                const LabelMap& target, const ClassWeights& weights);
LossResult pair_with_probs(const Logits& logits, const std::vector<double>& probs,
                           const LabelMap& pseudo, const ClassWeights& weights);

}  // namespace detail

}  // namespace dhc
