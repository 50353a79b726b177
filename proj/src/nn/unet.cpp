#include "oncosynth/nn/unet.hpp"

#include <string>

namespace oncosynth::nn {

UNet::UNet(const UNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.depth < 0 || cfg.base_channels < 1 || cfg.in_channels < 1 || cfg.out_channels < 1) {
    fail(ErrorCode::InvalidArgument, "unet: invalid configuration");
  }
  Rng rng(seed);
  auto ch = [&](int l) { return cfg.base_channels << l; };
  auto block = [&](int cin, int cout, const std::string& name) {
    return Block{Conv3d(cin, cout, 3, rng, name + ".a", cfg.slope), Conv3d(cout, cout, 3, rng, name + ".b", cfg.slope),
                 LeakyRelu(cfg.slope), LeakyRelu(cfg.slope)};
  };
  for (int l = 0; l <= cfg.depth; ++l) {
    encoders_.push_back(block(l == 0 ? cfg.in_channels : ch(l - 1), ch(l), "enc" + std::to_string(l)));
  }
  pools_.resize(static_cast<std::size_t>(cfg.depth));
  decoders_.resize(static_cast<std::size_t>(cfg.depth));
  for (int l = cfg.depth - 1; l >= 0; --l) {
    decoders_[static_cast<std::size_t>(l)] = block(ch(l + 1) + ch(l), ch(l), "dec" + std::to_string(l));
  }
  head_ = Conv3d(ch(0), cfg.out_channels, 1, rng, "head");
  std::fill(head_.bias.value.begin(), head_.bias.value.end(), cfg.head_bias);
}

Tensor UNet::forward(const Tensor& in) {
  const int g = cfg_.granularity();
  if (in.shape.nx % g || in.shape.ny % g || in.shape.nz % g) {
    fail(ErrorCode::ShapeMismatch, "unet: input dims must be divisible by " + std::to_string(g));
  }
  const auto depth = static_cast<std::size_t>(cfg_.depth);
  level_shapes_.assign(depth + 1, Shape3{});
  skip_channels_.assign(depth, 0);
  std::vector<Tensor> skips(depth);

  Tensor x = in;
  if (cfg_.input_shift != 0.0f || cfg_.input_scale != 1.0f) {
    for (auto& v : x.data) v = (v - cfg_.input_shift) * cfg_.input_scale;
  }
  for (std::size_t l = 0; l < depth; ++l) {
    level_shapes_[l] = x.shape;
    skips[l] = encoders_[l].forward(x);
    skip_channels_[l] = skips[l].channels;
    x = pools_[l].forward(skips[l]);
  }
  level_shapes_[depth] = x.shape;
  x = encoders_[depth].forward(x);
  for (std::size_t l = depth; l-- > 0;) {
    x = decoders_[l].forward(concat_channels(upsample2(x, skips[l].shape), skips[l]));
  }
  return head_.forward(x);
}

Tensor UNet::backward(const Tensor& grad_out) {
  const auto depth = static_cast<std::size_t>(cfg_.depth);
  std::vector<Tensor> skip_grads(depth);
  Tensor g = head_.backward(grad_out);
  for (std::size_t l = 0; l < depth; ++l) {
    Tensor gcat = decoders_[l].backward(g);
    Tensor gup, gskip;
    split_channels(gcat, gcat.channels - skip_channels_[l], gup, gskip);
    skip_grads[l] = std::move(gskip);
    g = upsample2_backward(gup, level_shapes_[l + 1]);
  }
  g = encoders_[depth].backward(g);
  for (std::size_t l = depth; l-- > 0;) {
    g = pools_[l].backward(g);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += skip_grads[l].data[i];
    g = encoders_[l].backward(g);
  }
  if (cfg_.input_scale != 1.0f) {
    for (auto& v : g.data) v *= cfg_.input_scale;
  }
  return g;
}

std::vector<Parameter*> UNet::parameters() {
  std::vector<Parameter*> out;
  auto add = [&](Conv3d& c) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  };
  for (auto& b : encoders_) {
    add(b.a);
    add(b.b);
  }
  for (auto& b : decoders_) {
    add(b.a);
    add(b.b);
  }
  add(head_);
  return out;
}

std::vector<const Parameter*> UNet::parameters() const {
  auto self = const_cast<UNet*>(this)->parameters();
  return {self.begin(), self.end()};
}

void UNet::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

void UNet::set_trainable(bool trainable) {
  auto set = [&](Conv3d& c) { c.accumulate_param_grads = trainable; };
  for (auto& b : encoders_) {
    set(b.a);
    set(b.b);
  }
  for (auto& b : decoders_) {
    set(b.a);
    set(b.b);
  }
  set(head_);
}

}  // namespace oncosynth::nn
