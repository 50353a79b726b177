#pragma once

#include <cstdint>
#include <vector>

#include "oncosynth/nn/layers.hpp"

namespace oncosynth::nn {

struct UNetConfig {
  int in_channels = 1;
  int out_channels = 1;
  int base_channels = 4;
  int depth = 2;  // number of 2x downsamplings
  float slope = 0.1f;
  /// Initial output logit, e.g. log(pi / (1 - pi)) for a foreground prior pi.
  float head_bias = 0.0f;
  /// Fixed input standardisation (x - shift) * scale applied before the first layer.
  float input_shift = 0.0f;
  float input_scale = 1.0f;

  /// Spatial dims must be divisible by this.
  int granularity() const { return 1 << depth; }
  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

/// Small encoder-decoder with skip connections. Each level has two 3x3x3
/// convolutions with leaky ReLU; channels double per level; the head is a
/// 1x1x1 convolution producing raw logits.
class UNet {
 public:
  UNet() = default;
  UNet(const UNetConfig& cfg, std::uint64_t seed);

  Tensor forward(const Tensor& in);
  /// Backpropagates dL/doutput; returns dL/dinput.
  Tensor backward(const Tensor& grad_out);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void zero_grad();
  /// When false, backward only propagates to the input (frozen network).
  void set_trainable(bool trainable);

  const UNetConfig& config() const { return cfg_; }

 private:
  struct Block {
    Conv3d a, b;
    LeakyRelu ra, rb;
    Tensor forward(const Tensor& in) { return rb.forward(b.forward(ra.forward(a.forward(in)))); }
    Tensor backward(const Tensor& g) { return a.backward(ra.backward(b.backward(rb.backward(g)))); }
  };

  UNetConfig cfg_;
  std::vector<Block> encoders_;  // depth + 1, last one is the bottleneck
  std::vector<MaxPool2> pools_;  // depth
  std::vector<Block> decoders_;  // depth, decoders_[l] works at level l
  Conv3d head_;

  std::vector<Shape3> level_shapes_;
  std::vector<int> skip_channels_;
};

}  // namespace oncosynth::nn
