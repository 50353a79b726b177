#pragma once

#include <cstdint>
#include <vector>

#include "oncosynth/nn/layers.hpp"

namespace oncosynth::nn {

struct ClassifierConfig {
  int in_channels = 1;
  int base_channels = 4;
  float slope = 0.1f;
  friend bool operator==(const ClassifierConfig&, const ClassifierConfig&) = default;
};

/// Patch classifier: conv-pool-conv-pool-conv, global average pooling and a
/// linear layer producing one logit (probability that the patch's tumor is real).
class PatchClassifier {
 public:
  PatchClassifier() = default;
  PatchClassifier(const ClassifierConfig& cfg, std::uint64_t seed);

  /// Returns the logit.
  float forward(const Tensor& patch);
  Tensor backward(float grad_logit);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void zero_grad();
  void set_trainable(bool trainable);
  const ClassifierConfig& config() const { return cfg_; }

 private:
  ClassifierConfig cfg_;
  Conv3d c1_, c2_, c3_;
  LeakyRelu r1_, r2_, r3_;
  MaxPool2 p1_, p2_;
  GlobalAvgPool gap_;
  Linear fc_;
};

}  // namespace oncosynth::nn
