#include "oncosynth/nn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace oncosynth::nn {
namespace {

// dst[x] += a*src[x-1] + b*src[x] + c*src[x+1], zero outside [0, n).
inline void row3(float* __restrict dst, const float* __restrict src, float a, float b, float c, int n) {
  if (n == 1) {
    dst[0] += b * src[0];
    return;
  }
  dst[0] += b * src[0] + c * src[1];
#pragma omp simd
  for (int x = 1; x < n - 1; ++x) dst[x] += a * src[x - 1] + b * src[x] + c * src[x + 1];
  dst[n - 1] += a * src[n - 2] + b * src[n - 1];
}

inline float dot(const float* __restrict a, const float* __restrict b, int n) {
  float s = 0.0f;
#pragma omp simd reduction(+ : s)
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline void axpy(float* __restrict dst, const float* __restrict src, float w, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) dst[i] += w * src[i];
}

}  // namespace

Conv3d::Conv3d(int in_channels, int out_channels, int kernel, Rng& rng, const std::string& name,
               float slope_for_init)
    : cin_(in_channels), cout_(out_channels), k_(kernel) {
  if (kernel != 1 && kernel != 3) fail(ErrorCode::InvalidArgument, "conv3d: kernel must be 1 or 3");
  const int taps = kernel * kernel * kernel;
  const auto n = static_cast<std::size_t>(cout_) * static_cast<std::size_t>(cin_) * static_cast<std::size_t>(taps);
  weight = {name + ".weight", std::vector<float>(n), std::vector<float>(n, 0.0f)};
  bias = {name + ".bias", std::vector<float>(static_cast<std::size_t>(cout_), 0.0f),
          std::vector<float>(static_cast<std::size_t>(cout_), 0.0f)};
  const double fan_in = static_cast<double>(cin_) * taps;
  const double bound = std::sqrt(6.0 / ((1.0 + slope_for_init * slope_for_init) * fan_in));
  for (auto& w : weight.value) w = static_cast<float>(rng.uniform(-bound, bound));
}

Tensor Conv3d::forward(const Tensor& in) {
  if (in.channels != cin_) fail(ErrorCode::ShapeMismatch, "conv3d: channel mismatch in " + weight.name);
  input_ = in;
  const auto s = in.shape;
  const int nx = s.nx, ny = s.ny, nz = s.nz;
  Tensor out(cout_, s);
  const auto plane = in.plane();

  for (int co = 0; co < cout_; ++co) {
    float* o = out.channel(co);
    std::fill(o, o + plane, bias.value[static_cast<std::size_t>(co)]);
    if (k_ == 1) {
      for (int ci = 0; ci < cin_; ++ci) {
        axpy(o, in.channel(ci), weight.value[static_cast<std::size_t>(co * cin_ + ci)], plane);
      }
      continue;
    }
    for (int z = 0; z < nz; ++z) {
      for (int y = 0; y < ny; ++y) {
        float* dst = o + (static_cast<std::size_t>(z) * ny + y) * nx;
        for (int ci = 0; ci < cin_; ++ci) {
          const float* src_c = in.channel(ci);
          const float* w = weight.value.data() + static_cast<std::size_t>(co * cin_ + ci) * 27;
          for (int kz = 0; kz < 3; ++kz) {
            const int zz = z + kz - 1;
            if (zz < 0 || zz >= nz) continue;
            for (int ky = 0; ky < 3; ++ky) {
              const int yy = y + ky - 1;
              if (yy < 0 || yy >= ny) continue;
              const float* src = src_c + (static_cast<std::size_t>(zz) * ny + yy) * nx;
              const float* wk = w + kz * 9 + ky * 3;
              row3(dst, src, wk[0], wk[1], wk[2], nx);
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor Conv3d::backward(const Tensor& grad_out) {
  const auto s = input_.shape;
  if (grad_out.channels != cout_ || !(grad_out.shape == s)) {
    fail(ErrorCode::ShapeMismatch, "conv3d backward: gradient shape mismatch in " + weight.name);
  }
  const int nx = s.nx, ny = s.ny, nz = s.nz;
  const auto plane = input_.plane();
  Tensor grad_in(cin_, s);

  if (k_ == 1) {
    for (int ci = 0; ci < cin_; ++ci) {
      float* gi = grad_in.channel(ci);
      for (int co = 0; co < cout_; ++co) {
        const auto wi = static_cast<std::size_t>(co * cin_ + ci);
        axpy(gi, grad_out.channel(co), weight.value[wi], plane);
        if (accumulate_param_grads) {
          double acc = 0.0;
          for (std::size_t off = 0; off < plane; off += static_cast<std::size_t>(nx)) {
            acc += dot(grad_out.channel(co) + off, input_.channel(ci) + off, nx);
          }
          weight.grad[wi] += static_cast<float>(acc);
        }
      }
    }
  } else {
    for (int ci = 0; ci < cin_; ++ci) {
      float* gi_c = grad_in.channel(ci);
      for (int zz = 0; zz < nz; ++zz) {
        for (int yy = 0; yy < ny; ++yy) {
          float* dst = gi_c + (static_cast<std::size_t>(zz) * ny + yy) * nx;
          for (int co = 0; co < cout_; ++co) {
            const float* g_c = grad_out.channel(co);
            const float* w = weight.value.data() + static_cast<std::size_t>(co * cin_ + ci) * 27;
            for (int kz = 0; kz < 3; ++kz) {
              const int z = zz - (kz - 1);
              if (z < 0 || z >= nz) continue;
              for (int ky = 0; ky < 3; ++ky) {
                const int y = yy - (ky - 1);
                if (y < 0 || y >= ny) continue;
                const float* src = g_c + (static_cast<std::size_t>(z) * ny + y) * nx;
                const float* wk = w + kz * 9 + ky * 3;
                row3(dst, src, wk[2], wk[1], wk[0], nx);
              }
            }
          }
        }
      }
    }

    if (accumulate_param_grads) {
      // Per-x partial sums per tap, reduced once per z-slice; keeps the inner
      // loops free of horizontal reductions.
      const auto row = static_cast<std::size_t>(nx);
      std::vector<float> lanes(27 * row);
      for (int co = 0; co < cout_; ++co) {
        const float* g_c = grad_out.channel(co);
        for (int ci = 0; ci < cin_; ++ci) {
          const float* in_c = input_.channel(ci);
          double acc[27] = {};
          for (int z = 0; z < nz; ++z) {
            std::fill(lanes.begin(), lanes.end(), 0.0f);
            for (int y = 0; y < ny; ++y) {
              const float* g = g_c + (static_cast<std::size_t>(z) * ny + y) * nx;
              for (int kz = 0; kz < 3; ++kz) {
                const int zz = z + kz - 1;
                if (zz < 0 || zz >= nz) continue;
                for (int ky = 0; ky < 3; ++ky) {
                  const int yy = y + ky - 1;
                  if (yy < 0 || yy >= ny) continue;
                  const float* src = in_c + (static_cast<std::size_t>(zz) * ny + yy) * nx;
                  const int k = kz * 9 + ky * 3;
                  float* __restrict l0 = lanes.data() + static_cast<std::size_t>(k) * row;
                  float* __restrict l1 = l0 + row;
                  float* __restrict l2 = l1 + row;
#pragma omp simd
                  for (int x = 1; x < nx; ++x) l0[x] += g[x] * src[x - 1];
#pragma omp simd
                  for (int x = 0; x < nx; ++x) l1[x] += g[x] * src[x];
#pragma omp simd
                  for (int x = 0; x < nx - 1; ++x) l2[x] += g[x] * src[x + 1];
                }
              }
            }
            for (int k = 0; k < 27; ++k) {
              const float* l = lanes.data() + static_cast<std::size_t>(k) * row;
              float s = 0.0f;
              for (int x = 0; x < nx; ++x) s += l[x];
              acc[k] += s;
            }
          }
          float* wg = weight.grad.data() + static_cast<std::size_t>(co * cin_ + ci) * 27;
          for (int k = 0; k < 27; ++k) wg[k] += static_cast<float>(acc[k]);
        }
      }
    }
  }

  if (accumulate_param_grads) {
    for (int co = 0; co < cout_; ++co) {
      double acc = 0.0;
      const float* g = grad_out.channel(co);
      for (std::size_t off = 0; off < plane; off += static_cast<std::size_t>(nx)) {
        float s = 0.0f;
#pragma omp simd reduction(+ : s)
        for (int x = 0; x < nx; ++x) s += g[off + static_cast<std::size_t>(x)];
        acc += s;
      }
      bias.grad[static_cast<std::size_t>(co)] += static_cast<float>(acc);
    }
  }
  return grad_in;
}

Tensor LeakyRelu::forward(const Tensor& in) {
  Tensor out = in;
  positive_.resize(in.data.size());
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const bool pos = out.data[i] > 0.0f;
    positive_[i] = pos ? 1 : 0;
    if (!pos) out.data[i] *= slope_;
  }
  return out;
}

Tensor LeakyRelu::backward(const Tensor& grad_out) const {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (!positive_[i]) g.data[i] *= slope_;
  return g;
}

Tensor MaxPool2::forward(const Tensor& in) {
  in_shape_ = in.shape;
  const Shape3 os{std::max(1, in.shape.nx / 2), std::max(1, in.shape.ny / 2), std::max(1, in.shape.nz / 2)};
  if (in.shape.nx < 2 || in.shape.ny < 2 || in.shape.nz < 2) {
    fail(ErrorCode::ShapeMismatch, "maxpool: input too small to pool");
  }
  Tensor out(in.channels, os);
  argmax_.assign(out.data.size(), 0);
  const int nx = in.shape.nx, ny = in.shape.ny;
  for (int c = 0; c < in.channels; ++c) {
    const float* src = in.channel(c);
    float* dst = out.channel(c);
    for (int z = 0; z < os.nz; ++z)
      for (int y = 0; y < os.ny; ++y)
        for (int x = 0; x < os.nx; ++x) {
          float best = -INFINITY;
          std::uint32_t arg = 0;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const auto i = static_cast<std::uint32_t>((static_cast<std::size_t>(2 * z + dz) * ny + (2 * y + dy)) * nx + (2 * x + dx));
                if (src[i] > best) {
                  best = src[i];
                  arg = i;
                }
              }
          const auto o = (static_cast<std::size_t>(z) * os.ny + y) * os.nx + x;
          dst[o] = best;
          argmax_[static_cast<std::size_t>(c) * out.plane() + o] = arg;
        }
  }
  return out;
}

Tensor MaxPool2::backward(const Tensor& grad_out) const {
  Tensor g(grad_out.channels, in_shape_);
  for (int c = 0; c < grad_out.channels; ++c) {
    float* dst = g.channel(c);
    const float* src = grad_out.channel(c);
    for (std::size_t o = 0; o < grad_out.plane(); ++o) {
      dst[argmax_[static_cast<std::size_t>(c) * grad_out.plane() + o]] += src[o];
    }
  }
  return g;
}

Tensor upsample2(const Tensor& in, Shape3 target) {
  Tensor out(in.channels, target);
  for (int c = 0; c < in.channels; ++c) {
    const float* src = in.channel(c);
    float* dst = out.channel(c);
    for (int z = 0; z < target.nz; ++z) {
      const int sz = std::min(z / 2, in.shape.nz - 1);
      for (int y = 0; y < target.ny; ++y) {
        const int sy = std::min(y / 2, in.shape.ny - 1);
        for (int x = 0; x < target.nx; ++x) {
          const int sx = std::min(x / 2, in.shape.nx - 1);
          dst[(static_cast<std::size_t>(z) * target.ny + y) * target.nx + x] =
              src[(static_cast<std::size_t>(sz) * in.shape.ny + sy) * in.shape.nx + sx];
        }
      }
    }
  }
  return out;
}

Tensor upsample2_backward(const Tensor& grad_out, Shape3 source) {
  Tensor g(grad_out.channels, source);
  const auto t = grad_out.shape;
  for (int c = 0; c < grad_out.channels; ++c) {
    const float* src = grad_out.channel(c);
    float* dst = g.channel(c);
    for (int z = 0; z < t.nz; ++z) {
      const int sz = std::min(z / 2, source.nz - 1);
      for (int y = 0; y < t.ny; ++y) {
        const int sy = std::min(y / 2, source.ny - 1);
        for (int x = 0; x < t.nx; ++x) {
          const int sx = std::min(x / 2, source.nx - 1);
          dst[(static_cast<std::size_t>(sz) * source.ny + sy) * source.nx + sx] +=
              src[(static_cast<std::size_t>(z) * t.ny + y) * t.nx + x];
        }
      }
    }
  }
  return g;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (!(a.shape == b.shape)) fail(ErrorCode::ShapeMismatch, "concat: spatial shapes differ");
  Tensor out(a.channels + b.channels, a.shape);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

void split_channels(const Tensor& grad, int first_channels, Tensor& ga, Tensor& gb) {
  ga = Tensor(first_channels, grad.shape);
  gb = Tensor(grad.channels - first_channels, grad.shape);
  std::copy(grad.data.begin(), grad.data.begin() + static_cast<std::ptrdiff_t>(ga.data.size()), ga.data.begin());
  std::copy(grad.data.begin() + static_cast<std::ptrdiff_t>(ga.data.size()), grad.data.end(), gb.data.begin());
}

Tensor GlobalAvgPool::forward(const Tensor& in) {
  in_shape_ = in.shape;
  Tensor out(in.channels, Shape3{1, 1, 1});
  for (int c = 0; c < in.channels; ++c) {
    double s = 0.0;
    const float* p = in.channel(c);
    for (std::size_t i = 0; i < in.plane(); ++i) s += p[i];
    out.data[static_cast<std::size_t>(c)] = static_cast<float>(s / static_cast<double>(in.plane()));
  }
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) const {
  Tensor g(grad_out.channels, in_shape_);
  const float inv = 1.0f / static_cast<float>(in_shape_.count());
  for (int c = 0; c < grad_out.channels; ++c) {
    std::fill(g.channel(c), g.channel(c) + g.plane(), grad_out.data[static_cast<std::size_t>(c)] * inv);
  }
  return g;
}

Linear::Linear(int in_features, int out_features, Rng& rng, const std::string& name)
    : in_(in_features), out_(out_features) {
  const auto n = static_cast<std::size_t>(in_) * static_cast<std::size_t>(out_);
  weight = {name + ".weight", std::vector<float>(n), std::vector<float>(n, 0.0f)};
  bias = {name + ".bias", std::vector<float>(static_cast<std::size_t>(out_), 0.0f),
          std::vector<float>(static_cast<std::size_t>(out_), 0.0f)};
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  for (auto& w : weight.value) w = static_cast<float>(rng.uniform(-bound, bound));
}

Tensor Linear::forward(const Tensor& in) {
  if (static_cast<int>(in.data.size()) != in_) fail(ErrorCode::ShapeMismatch, "linear: feature mismatch");
  input_ = in;
  Tensor out(out_, Shape3{1, 1, 1});
  for (int o = 0; o < out_; ++o) {
    double s = bias.value[static_cast<std::size_t>(o)];
    for (int i = 0; i < in_; ++i) s += static_cast<double>(weight.value[static_cast<std::size_t>(o * in_ + i)]) * in.data[static_cast<std::size_t>(i)];
    out.data[static_cast<std::size_t>(o)] = static_cast<float>(s);
  }
  return out;
}

Tensor Linear::backward(const Tensor& grad_out) {
  Tensor g(in_, Shape3{1, 1, 1});
  for (int o = 0; o < out_; ++o) {
    const float go = grad_out.data[static_cast<std::size_t>(o)];
    for (int i = 0; i < in_; ++i) {
      const auto wi = static_cast<std::size_t>(o * in_ + i);
      g.data[static_cast<std::size_t>(i)] += weight.value[wi] * go;
      if (accumulate_param_grads) weight.grad[wi] += input_.data[static_cast<std::size_t>(i)] * go;
    }
    if (accumulate_param_grads) bias.grad[static_cast<std::size_t>(o)] += go;
  }
  return g;
}

}  // namespace oncosynth::nn
