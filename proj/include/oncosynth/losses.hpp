#pragma once

#include <cmath>

#include "oncosynth/nn/tensor.hpp"
#include "oncosynth/volume.hpp"

namespace oncosynth {

inline float sigmoid(float z) {
  return z >= 0.0f ? 1.0f / (1.0f + std::exp(-z)) : std::exp(z) / (1.0f + std::exp(z));
}

Grid3<float> sigmoid(const nn::Tensor& logits);

struct LossGrad {
  double value = 0.0;
  nn::Tensor grad;  // dL/dlogits
};

/// Soft Dice + mean binary cross-entropy on single-channel logits.
LossGrad dice_ce_loss(const nn::Tensor& logits, const Grid3<std::uint8_t>& target);

/// Mean over mask voxels of |1 - p|. Throws EmptyMask.
double compute_seg_loss(const Grid3<float>& probs, const LabelMap& mask);

/// compute_seg_loss on sigmoid(logits) with its gradient w.r.t. the logits.
LossGrad seg_loss_from_logits(const nn::Tensor& logits, const LabelMap& mask);

struct ScalarLoss {
  double value = 0.0;
  double grad = 0.0;  // dL/dlogit
};

/// Numerically stable binary cross-entropy on a logit; target in {0, 1}.
ScalarLoss bce_with_logit(double logit, double target);

}  // namespace oncosynth
