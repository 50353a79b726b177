#pragma once

#include <vector>

#include "oncosynth/volume.hpp"

namespace oncosynth {

/// Normalised 1-D Gaussian taps for offsets -radius..radius.
/// sigma == 0 yields a delta kernel.
std::vector<double> gaussian_kernel_1d(double sigma, int radius);

/// Index into [0, n) with symmetric reflection (d c b a | a b c d | d c b a).
int reflect_index(int i, int n);

/// Separable convolution with the same 1-D kernel along x, y and z and
/// reflective boundaries.
Grid3<float> separable_convolve(const Grid3<float>& in, const std::vector<double>& taps);

/// Adjoint of separable_convolve: <K a, b> == <a, K^T b>.
Grid3<float> separable_convolve_adjoint(const Grid3<float>& in, const std::vector<double>& taps);

/// Zero-mean, unit-variance Gaussian noise smoothed with the given sigma.
Grid3<float> smooth_noise(Shape3 shape, double sigma_voxels, std::uint64_t seed);

}  // namespace oncosynth
