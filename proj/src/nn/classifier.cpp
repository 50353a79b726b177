#include "oncosynth/nn/classifier.hpp"

namespace oncosynth::nn {

PatchClassifier::PatchClassifier(const ClassifierConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), r1_(cfg.slope), r2_(cfg.slope), r3_(cfg.slope) {
  Rng rng(seed);
  const int c = cfg.base_channels;
  c1_ = Conv3d(cfg.in_channels, c, 3, rng, "cls.c1", cfg.slope);
  c2_ = Conv3d(c, 2 * c, 3, rng, "cls.c2", cfg.slope);
  c3_ = Conv3d(2 * c, 2 * c, 3, rng, "cls.c3", cfg.slope);
  fc_ = Linear(2 * c, 1, rng, "cls.fc");
}

float PatchClassifier::forward(const Tensor& patch) {
  Tensor x = p1_.forward(r1_.forward(c1_.forward(patch)));
  x = p2_.forward(r2_.forward(c2_.forward(x)));
  x = gap_.forward(r3_.forward(c3_.forward(x)));
  return fc_.forward(x).data[0];
}

Tensor PatchClassifier::backward(float grad_logit) {
  Tensor g(1, Shape3{1, 1, 1}, grad_logit);
  g = fc_.backward(g);
  g = c3_.backward(r3_.backward(gap_.backward(g)));
  g = c2_.backward(r2_.backward(p2_.backward(g)));
  return c1_.backward(r1_.backward(p1_.backward(g)));
}

std::vector<Parameter*> PatchClassifier::parameters() {
  return {&c1_.weight, &c1_.bias, &c2_.weight, &c2_.bias, &c3_.weight, &c3_.bias, &fc_.weight, &fc_.bias};
}

std::vector<const Parameter*> PatchClassifier::parameters() const {
  auto self = const_cast<PatchClassifier*>(this)->parameters();
  return {self.begin(), self.end()};
}

void PatchClassifier::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

void PatchClassifier::set_trainable(bool trainable) {
  c1_.accumulate_param_grads = trainable;
  c2_.accumulate_param_grads = trainable;
  c3_.accumulate_param_grads = trainable;
  fc_.accumulate_param_grads = trainable;
}

}  // namespace oncosynth::nn
