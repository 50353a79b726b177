#pragma once

#include <cstdint>
#include <vector>

#include "oncosynth/nn/tensor.hpp"
#include "oncosynth/rng.hpp"

namespace oncosynth::nn {

// Layers cache whatever their backward pass needs from the most recent
// forward call, so forward/backward must be paired per sample.

/// 3-D convolution, kernel 1 or 3, stride 1, zero "same" padding.
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(int in_channels, int out_channels, int kernel, Rng& rng, const std::string& name,
         float slope_for_init = 0.0f);

  Tensor forward(const Tensor& in);
  /// Returns dL/dinput; accumulates parameter gradients when enabled.
  Tensor backward(const Tensor& grad_out);

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }
  int kernel() const { return k_; }

  Parameter weight;  // [cout][cin][k^3]
  Parameter bias;    // [cout]
  bool accumulate_param_grads = true;

 private:
  int cin_ = 0;
  int cout_ = 0;
  int k_ = 3;
  Tensor input_;
};

class LeakyRelu {
 public:
  explicit LeakyRelu(float slope = 0.1f) : slope_(slope) {}
  Tensor forward(const Tensor& in);
  Tensor backward(const Tensor& grad_out) const;

 private:
  float slope_;
  std::vector<std::uint8_t> positive_;
};

/// 2x2x2 max pooling; odd trailing planes are dropped.
class MaxPool2 {
 public:
  Tensor forward(const Tensor& in);
  Tensor backward(const Tensor& grad_out) const;

 private:
  Shape3 in_shape_{};
  std::vector<std::uint32_t> argmax_;
};

/// Nearest-neighbour x2 upsampling to an explicit target shape.
Tensor upsample2(const Tensor& in, Shape3 target);
Tensor upsample2_backward(const Tensor& grad_out, Shape3 source);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& grad, int first_channels, Tensor& ga, Tensor& gb);

/// Mean over the spatial grid, per channel -> channels x 1x1x1.
class GlobalAvgPool {
 public:
  Tensor forward(const Tensor& in);
  Tensor backward(const Tensor& grad_out) const;

 private:
  Shape3 in_shape_{};
};

/// Fully connected layer on a channels x 1x1x1 tensor.
class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features, Rng& rng, const std::string& name);
  Tensor forward(const Tensor& in);
  Tensor backward(const Tensor& grad_out);

  Parameter weight;
  Parameter bias;
  bool accumulate_param_grads = true;

 private:
  int in_ = 0;
  int out_ = 0;
  Tensor input_;
};

}  // namespace oncosynth::nn
