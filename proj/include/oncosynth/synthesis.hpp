#pragma once

#include "oncosynth/tumor_mask.hpp"
#include "oncosynth/volume.hpp"

namespace oncosynth {

/// Texture filter g(.) of the synthesis transform.
struct GaussianFilterCfg {
  double sigma = 1.0;  // voxels
  int radius = 3;      // truncation, voxels
  /// Alternative reading of the transform: blur the activated generator
  /// field instead of the image, x_hat = x - g(tanh(G(x))) * x.
  bool blur_generator_field = false;

  void validate() const;
};

/// Generator output: raw (pre-activation) field and its tanh activation,
/// kept strictly inside (-1, 1).
class GeneratorOutput {
 public:
  explicit GeneratorOutput(Grid3<float> raw);

  const Grid3<float>& raw() const { return raw_; }
  const Grid3<float>& activated() const { return activated_; }

 private:
  Grid3<float> raw_;
  Grid3<float> activated_;
};

/// Separable Gaussian with reflective boundary.
Volume gaussian_blur(const Volume& v, const GaussianFilterCfg& cfg);

/// x_hat = (1-M) x + M [x - tanh(G(x)) g(x)], clamped to [0,1].
/// Voxels with M = 0 are copied bit for bit.
Volume apply_synthesis(const Volume& x, const LabelMap& mask, const GeneratorOutput& gout,
                       const GaussianFilterCfg& cfg);
inline Volume apply_synthesis(const Volume& x, const TumorMask& m, const GeneratorOutput& gout,
                              const GaussianFilterCfg& cfg) {
  return apply_synthesis(x, m.mask, gout, cfg);
}

/// Vector-Jacobian product of apply_synthesis w.r.t. the raw generator field:
/// given dL/dx_hat, returns dL/d(raw). Clamped voxels pass no gradient.
Grid3<float> synthesis_backward(const Volume& x, const LabelMap& mask, const GeneratorOutput& gout,
                                const GaussianFilterCfg& cfg, const Grid3<float>& grad_xhat);

}  // namespace oncosynth
