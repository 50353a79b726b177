#pragma once

#include <cstdint>
#include <vector>

#include "oncosynth/nn/tensor.hpp"

namespace oncosynth::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg);

  /// One update with learning rate `lr` (the schedule is applied by the caller).
  /// Gradients are scaled by `grad_scale` first, e.g. 1/batch.
  void step(double lr, double grad_scale = 1.0);
  std::int64_t steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  std::int64_t t_ = 0;
};

/// Cosine annealing from base_lr to 0 over total_steps.
double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps);

/// FNV-1a over the raw bytes of all parameter values, in order.
std::uint64_t parameter_hash(const std::vector<const Parameter*>& params);

}  // namespace oncosynth::nn
