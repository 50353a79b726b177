#include "oncosynth/losses.hpp"

namespace oncosynth {

Grid3<float> sigmoid(const nn::Tensor& logits) {
  Grid3<float> p(logits.shape);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits.data[i]);
  return p;
}

LossGrad dice_ce_loss(const nn::Tensor& logits, const Grid3<std::uint8_t>& target) {
  require_same_shape(logits.shape, target.shape(), "dice_ce_loss");
  constexpr double kSmooth = 1e-5;
  const auto n = target.size();
  std::vector<double> p(n);
  double inter = 0.0, sum_p = 0.0, sum_g = 0.0, bce = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.data[i];
    const double g = target[i] ? 1.0 : 0.0;
    p[i] = sigmoid(static_cast<float>(z));
    inter += p[i] * g;
    sum_p += p[i];
    sum_g += g;
    bce += std::max(z, 0.0) - z * g + std::log1p(std::exp(-std::abs(z)));
  }
  const double denom = sum_p + sum_g + kSmooth;
  const double dice = (2.0 * inter + kSmooth) / denom;

  LossGrad out;
  out.value = (1.0 - dice) + bce / static_cast<double>(n);
  out.grad = nn::Tensor(1, logits.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = target[i] ? 1.0 : 0.0;
    const double ddice_dp = (2.0 * g * denom - (2.0 * inter + kSmooth)) / (denom * denom);
    const double dp_dz = p[i] * (1.0 - p[i]);
    out.grad.data[i] = static_cast<float>(-ddice_dp * dp_dz + (p[i] - g) / static_cast<double>(n));
  }
  return out;
}

double compute_seg_loss(const Grid3<float>& probs, const LabelMap& mask) {
  require_same_shape(probs.shape(), mask.shape(), "compute_seg_loss");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!mask.data[i]) continue;
    sum += std::abs(1.0 - static_cast<double>(probs[i]));
    ++count;
  }
  if (count == 0) fail(ErrorCode::EmptyMask, "compute_seg_loss: empty tumor mask");
  return sum / static_cast<double>(count);
}

LossGrad seg_loss_from_logits(const nn::Tensor& logits, const LabelMap& mask) {
  const auto probs = sigmoid(logits);
  LossGrad out;
  out.value = compute_seg_loss(probs, mask);
  const double inv = 1.0 / static_cast<double>(mask.count_nonzero());
  out.grad = nn::Tensor(1, logits.shape);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!mask.data[i]) continue;
    const double p = probs[i];
    const double sign = p < 1.0 ? 1.0 : 0.0;  // d|1-p|/dp = -1 for p < 1
    out.grad.data[i] = static_cast<float>(-sign * inv * p * (1.0 - p));
  }
  return out;
}

ScalarLoss bce_with_logit(double logit, double target) {
  const double value = std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return {value, p - target};
}

}  // namespace oncosynth
