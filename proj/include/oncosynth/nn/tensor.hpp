#pragma once

#include <span>
#include <string>
#include <vector>

#include "oncosynth/volume.hpp"

namespace oncosynth::nn {

/// Single-sample activation: channels x (nz, ny, nx), channel-major.
struct Tensor {
  int channels = 0;
  Shape3 shape{};
  std::vector<float> data;

  Tensor() = default;
  Tensor(int c, Shape3 s, float fill = 0.0f)
      : channels(c), shape(s), data(static_cast<std::size_t>(c) * s.count(), fill) {}

  std::size_t plane() const { return shape.count(); }
  float* channel(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
  const float* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * plane(); }

  static Tensor from_grid(const Grid3<float>& g) {
    Tensor t(1, g.shape());
    std::copy(g.values().begin(), g.values().end(), t.data.begin());
    return t;
  }
  Grid3<float> to_grid(int c = 0) const {
    std::vector<float> v(channel(c), channel(c) + plane());
    return Grid3<float>(shape, std::move(v));
  }
};

/// Trainable array with its gradient accumulator.
struct Parameter {
  std::string name;
  std::vector<float> value;
  std::vector<float> grad;

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

}  // namespace oncosynth::nn
