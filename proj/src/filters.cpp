#include "oncosynth/filters.hpp"

#include <cmath>

#include "oncosynth/rng.hpp"

namespace oncosynth {

std::vector<double> gaussian_kernel_1d(double sigma, int radius) {
  if (sigma < 0.0 || radius < 0) fail(ErrorCode::InvalidArgument, "gaussian: negative sigma or radius");
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1), 0.0);
  if (sigma == 0.0) {
    taps[static_cast<std::size_t>(radius)] = 1.0;
    return taps;
  }
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    taps[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (auto& w : taps) w /= sum;
  return taps;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

namespace {

enum class Axis { X, Y, Z };

// One pass along `axis`. When `adjoint` is set the taps scatter instead of gather.
Grid3<float> pass(const Grid3<float>& in, const std::vector<double>& taps, Axis axis, bool adjoint) {
  const auto s = in.shape();
  const int radius = static_cast<int>(taps.size() / 2);
  const int n = axis == Axis::X ? s.nx : axis == Axis::Y ? s.ny : s.nz;
  Grid3<float> out(s, 0.0f);
  std::vector<double> line(static_cast<std::size_t>(n)), acc(static_cast<std::size_t>(n));

  const int outer_a = axis == Axis::X ? s.ny : s.nx;
  const int outer_b = axis == Axis::Z ? s.ny : s.nz;
  for (int b = 0; b < outer_b; ++b) {
    for (int a = 0; a < outer_a; ++a) {
      auto at = [&](int i) -> std::size_t {
        switch (axis) {
          case Axis::X: return in.offset(i, a, b);
          case Axis::Y: return in.offset(a, i, b);
          case Axis::Z: return in.offset(a, b, i);
        }
        return 0;
      };
      for (int i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = in[at(i)];
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int i = 0; i < n; ++i) {
        for (int k = -radius; k <= radius; ++k) {
          const double w = taps[static_cast<std::size_t>(k + radius)];
          const int j = reflect_index(i + k, n);
          if (adjoint) {
            acc[static_cast<std::size_t>(j)] += w * line[static_cast<std::size_t>(i)];
          } else {
            acc[static_cast<std::size_t>(i)] += w * line[static_cast<std::size_t>(j)];
          }
        }
      }
      for (int i = 0; i < n; ++i) out[at(i)] = static_cast<float>(acc[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

}  // namespace

Grid3<float> separable_convolve(const Grid3<float>& in, const std::vector<double>& taps) {
  return pass(pass(pass(in, taps, Axis::X, false), taps, Axis::Y, false), taps, Axis::Z, false);
}

Grid3<float> separable_convolve_adjoint(const Grid3<float>& in, const std::vector<double>& taps) {
  return pass(pass(pass(in, taps, Axis::Z, true), taps, Axis::Y, true), taps, Axis::X, true);
}

Grid3<float> smooth_noise(Shape3 shape, double sigma_voxels, std::uint64_t seed) {
  Rng rng(seed);
  Grid3<float> white(shape);
  for (auto& v : white.values()) v = static_cast<float>(rng.normal());
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_voxels)));
  auto smooth = separable_convolve(white, gaussian_kernel_1d(sigma_voxels, radius));
  double mean = 0.0, sq = 0.0;
  for (float v : smooth.values()) mean += v;
  mean /= static_cast<double>(smooth.size());
  for (float v : smooth.values()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(smooth.size()));
  const double scale = sd > 0.0 ? 1.0 / sd : 0.0;
  for (auto& v : smooth.values()) v = static_cast<float>((v - mean) * scale);
  return smooth;
}

}  // namespace oncosynth
