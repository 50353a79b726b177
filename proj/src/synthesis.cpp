#include "oncosynth/synthesis.hpp"

#include <algorithm>
#include <cmath>

#include "oncosynth/filters.hpp"

namespace oncosynth {

void GaussianFilterCfg::validate() const {
  if (sigma < 0.0) fail(ErrorCode::InvalidArgument, "gaussian filter: sigma must be >= 0");
  if (radius < static_cast<int>(std::ceil(2.0 * sigma))) {
    fail(ErrorCode::InvalidArgument, "gaussian filter: radius must be >= ceil(2 sigma)");
  }
}

GeneratorOutput::GeneratorOutput(Grid3<float> raw) : raw_(std::move(raw)), activated_(raw_.shape()) {
  constexpr float kInside = 0x1.fffffep-1f;  // largest float below 1
  for (std::size_t i = 0; i < raw_.size(); ++i) {
    activated_[i] = std::clamp(static_cast<float>(std::tanh(static_cast<double>(raw_[i]))), -kInside, kInside);
  }
}

Volume gaussian_blur(const Volume& v, const GaussianFilterCfg& cfg) {
  cfg.validate();
  if (cfg.sigma == 0.0) return v;
  return Volume(separable_convolve(v.data, gaussian_kernel_1d(cfg.sigma, cfg.radius)), v.spacing, v.id);
}

namespace {

// Per-voxel factors of the transform: x_hat = x - a * b, where (a, b) is
// (tanh G, g(x)) in the literal reading and (g(tanh G), x) in the alternative.
struct Factors {
  Grid3<float> a;
  Grid3<float> b;
};

Factors factors(const Volume& x, const GeneratorOutput& gout, const GaussianFilterCfg& cfg) {
  cfg.validate();
  const auto taps = gaussian_kernel_1d(cfg.sigma, cfg.radius);
  if (cfg.blur_generator_field) {
    return {cfg.sigma == 0.0 ? gout.activated() : separable_convolve(gout.activated(), taps), x.data};
  }
  return {gout.activated(), cfg.sigma == 0.0 ? x.data : separable_convolve(x.data, taps)};
}

void check_shapes(const Volume& x, const LabelMap& mask, const GeneratorOutput& gout) {
  require_same_shape(x.shape(), mask.shape(), "apply_synthesis mask");
  require_same_shape(x.shape(), gout.raw().shape(), "apply_synthesis generator field");
}

}  // namespace

Volume apply_synthesis(const Volume& x, const LabelMap& mask, const GeneratorOutput& gout,
                       const GaussianFilterCfg& cfg) {
  check_shapes(x, mask, gout);
  Volume out = x;
  bool any = false;
  for (auto m : mask.data.values()) any = any || m != 0;
  if (!any) return out;

  const auto f = factors(x, gout, cfg);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (!mask.data[i]) continue;
    const double v = static_cast<double>(x.data[i]) - static_cast<double>(f.a[i]) * f.b[i];
    out.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

Grid3<float> synthesis_backward(const Volume& x, const LabelMap& mask, const GeneratorOutput& gout,
                                const GaussianFilterCfg& cfg, const Grid3<float>& grad_xhat) {
  check_shapes(x, mask, gout);
  require_same_shape(x.shape(), grad_xhat.shape(), "synthesis_backward gradient");
  const auto f = factors(x, gout, cfg);

  // dL/da on masked, unclamped voxels.
  Grid3<float> grad_a(x.shape(), 0.0f);
  for (std::size_t i = 0; i < grad_a.size(); ++i) {
    if (!mask.data[i]) continue;
    const double v = static_cast<double>(x.data[i]) - static_cast<double>(f.a[i]) * f.b[i];
    if (v <= 0.0 || v >= 1.0) continue;
    grad_a[i] = static_cast<float>(-static_cast<double>(grad_xhat[i]) * f.b[i]);
  }
  if (cfg.blur_generator_field && cfg.sigma > 0.0) {
    grad_a = separable_convolve_adjoint(grad_a, gaussian_kernel_1d(cfg.sigma, cfg.radius));
  }
  Grid3<float> grad_raw(x.shape(), 0.0f);
  for (std::size_t i = 0; i < grad_raw.size(); ++i) {
    const double t = gout.activated()[i];
    grad_raw[i] = static_cast<float>(grad_a[i] * (1.0 - t * t));
  }
  return grad_raw;
}

}  // namespace oncosynth
