#include "oncosynth/adversarial.hpp"

#include <cmath>
#include <sstream>

#include "oncosynth/crop.hpp"
#include "oncosynth/losses.hpp"
#include "oncosynth/morphology.hpp"
#include "oncosynth/nn/optim.hpp"
#include "oncosynth/rng.hpp"

namespace oncosynth {

namespace {

void check_patch(Shape3 p, int gran, const char* what) {
  if (!p.valid() || p.nx % gran || p.ny % gran || p.nz % gran) {
    fail(ErrorCode::InvalidArgument, std::string(what) + " dims must be positive multiples of " + std::to_string(gran));
  }
}

LabelMap organ_of(const LabelMap& combined) {
  Grid3<std::uint8_t> g(combined.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = combined.data[i] ? 1 : 0;
  return LabelMap(std::move(g), combined.spacing);
}

Grid3<float> crop_around(const Grid3<float>& img, const LabelMap& mask, Shape3 size, Index3* origin = nullptr) {
  const auto o = mask_centered_origin(mask, size);
  if (origin) *origin = o;
  return extract_box(img, o, size, 0.0f);
}

/// Adds a box-shaped gradient back into the full-size gradient grid.
void scatter_add(Grid3<float>& dst, const nn::Tensor& box, Index3 origin) {
  const auto s = box.shape;
  const auto d = dst.shape();
  for (int z = 0; z < s.nz; ++z) {
    const int gz = origin.z + z;
    if (gz < 0 || gz >= d.nz) continue;
    for (int y = 0; y < s.ny; ++y) {
      const int gy = origin.y + y;
      if (gy < 0 || gy >= d.ny) continue;
      for (int x = 0; x < s.nx; ++x) {
        const int gx = origin.x + x;
        if (gx < 0 || gx >= d.nx) continue;
        dst(gx, gy, gz) += box.data[(static_cast<std::size_t>(z) * s.ny + y) * s.nx + x];
      }
    }
  }
}

std::vector<Grid3<float>> real_tumor_patches(const std::vector<TrainCase>& labeled, Shape3 size) {
  std::vector<Grid3<float>> out;
  for (const auto& c : labeled) {
    if (!c.has_tumor()) continue;
    for (const auto& inst : split_instances(c.tumor())) out.push_back(crop_around(c.image.data, inst, size));
  }
  return out;
}

}  // namespace

void AdvConfig::validate() const {
  if (!(lambda_cls >= 0.0) || !std::isfinite(lambda_cls)) fail(ErrorCode::InvalidArgument, "lambda_cls must be >= 0");
  if (!(lr_synthesis > 0.0) || !(lr_segmentation > 0.0)) fail(ErrorCode::InvalidArgument, "learning rates must be > 0");
  if (weight_decay < 0.0) fail(ErrorCode::InvalidArgument, "weight decay must be >= 0");
  if (batch < 1) fail(ErrorCode::InvalidArgument, "batch must be >= 1");
  if (stage1_epochs < 1 || stage2_epochs < 1 || stage2_steps_per_epoch < 1) {
    fail(ErrorCode::InvalidArgument, "epochs and steps per epoch must be >= 1");
  }
  check_patch(seg_patch, seg_net.granularity(), "seg_patch");
  check_patch(synth_patch, std::max(seg_net.granularity(), gen_net.granularity()), "synth_patch");
  check_patch(cls_patch, 4, "cls_patch");
  if (!(threshold > 0.0 && threshold <= 1.0)) fail(ErrorCode::InvalidArgument, "threshold must be in (0, 1]");
  filter.validate();
  mask_size.validate();
}

SegTrainerSettings AdvConfig::stage1_settings() const {
  SegTrainerSettings s;
  s.lr = lr_segmentation;
  s.weight_decay = weight_decay;
  s.batch = batch;
  s.labeled_per_batch = batch;
  s.epochs = stage1_epochs;
  s.patch = seg_patch;
  s.net = seg_net;
  s.tumor_centered_fraction = tumor_centered_fraction;
  s.flip_augment = flip_augment;
  s.seed = seed;
  s.guard = guard;
  return s;
}

LossBundle make_loss_bundle(double l_seg, std::span<const double> synthetic_logits, double lambda_cls) {
  LossBundle b;
  b.l_seg = l_seg;
  if (!synthetic_logits.empty()) {
    double sum = 0.0;
    for (double z : synthetic_logits) sum += bce_with_logit(z, 1.0).value;
    b.l_cls = sum / static_cast<double>(synthetic_logits.size());
  }
  b.l_adv = lambda_cls * b.l_cls + b.l_seg;
  return b;
}

std::optional<double> classifier_loss(std::span<const double> real, std::span<const double> synthetic) {
  if (real.empty() || synthetic.empty()) return std::nullopt;
  double sum = 0.0;
  for (double z : real) sum += bce_with_logit(z, 1.0).value;
  for (double z : synthetic) sum += bce_with_logit(z, 0.0).value;
  return sum / static_cast<double>(real.size() + synthetic.size());
}

LossBundle compute_adv_losses(const Volume& xhat, const LabelMap& mask, nn::UNet& s, nn::PatchClassifier& c,
                              const AdvConfig& cfg) {
  const auto probs = sigmoid(s.forward(nn::Tensor::from_grid(xhat.data)));
  const double l_seg = compute_seg_loss(probs, mask);
  const double logit = c.forward(nn::Tensor::from_grid(crop_around(xhat.data, mask, cfg.cls_patch)));
  const double logits[] = {logit};
  return make_loss_bundle(l_seg, logits, cfg.lambda_cls);
}

Index3 mask_centered_origin(const LabelMap& mask, Shape3 size) {
  const auto s = mask.shape();
  double cx = 0.0, cy = 0.0, cz = 0.0;
  std::size_t n = 0;
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x)
        if (mask.data(x, y, z)) {
          cx += x;
          cy += y;
          cz += z;
          ++n;
        }
  if (n == 0) fail(ErrorCode::EmptyMask, "mask_centered_origin: empty mask");
  auto start = [n](double sum, int len) {
    return static_cast<int>(std::lround(sum / static_cast<double>(n))) - len / 2;
  };
  return {start(cx, size.nx), start(cy, size.ny), start(cz, size.nz)};
}

SegTrainResult train_stage1(const std::vector<TrainCase>& labeled, const AdvConfig& cfg, std::ostream* log) {
  cfg.validate();
  bool any = false;
  for (const auto& c : labeled) any = any || c.has_tumor();
  if (!any) fail(ErrorCode::EmptyMask, "stage 1 needs at least one labeled tumor voxel");
  return run_seg_training(labeled, cfg.stage1_settings(), nullptr, log);
}

SynthesisDraw draw_synthesis_patch(const std::vector<TrainCase>& cases, const AdvConfig& cfg, std::uint64_t seed,
                                   int max_tries) {
  if (cases.empty()) fail(ErrorCode::InsufficientPool, "no cases to synthesize on");
  Rng rng(seed);
  for (int t = 0; t < max_tries; ++t) {
    const auto& c = cases[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cases.size()) - 1))];
    const auto crop_seed = rng.fork();
    const auto mask_seed = rng.fork();
    if (!c.has_organ()) continue;
    auto crop = crop_patch(c.image, c.labels, cfg.synth_patch, CropPolicy::OrganCentered, crop_seed, kTumorClass);
    auto organ = organ_of(crop.labels);
    try {
      auto m = sample_tumor_mask(organ, cfg.mask_size, mask_seed, cfg.sampler, c.image.id);
      crop.image.id = c.image.id;
      return {std::move(crop.image), std::move(organ), std::move(m)};
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OrganTooSmall) throw;
    }
  }
  fail(ErrorCode::InsufficientPool, "no usable organ found after " + std::to_string(max_tries) + " draws");
}

GeneratorEval evaluate_generator(const nn::UNet& g_in, const nn::UNet& s_in, const std::vector<TrainCase>& cases,
                                 int n, const AdvConfig& cfg, std::uint64_t seed) {
  auto g = g_in;
  auto s = s_in;
  GeneratorEval out;
  double sum = 0.0;
  int passed = 0;
  for (int i = 0; i < n; ++i) {
    const auto d = draw_synthesis_patch(cases, cfg, Rng::derive(seed, static_cast<std::uint64_t>(i)));
    const GeneratorOutput gout(g.forward(nn::Tensor::from_grid(d.image.data)).to_grid());
    const auto xhat = apply_synthesis(d.image, d.mask, gout, cfg.filter);
    const auto probs = sigmoid(s.forward(nn::Tensor::from_grid(xhat.data)));
    auto v = judge(probs, d.mask.mask, cfg.threshold, d.image.id + "#" + std::to_string(i));
    sum += v.proportion;
    passed += v.passed ? 1 : 0;
    out.verdicts.push_back(std::move(v));
  }
  if (n > 0) {
    out.mean_p = sum / n;
    out.pass_rate = static_cast<double>(passed) / n;
  }
  return out;
}

nlohmann::json to_json(const Stage2EpochLog& e) {
  nlohmann::json j = {{"epoch", e.epoch},     {"l_seg", e.l_seg},   {"l_cls", e.l_cls},
                      {"l_adv", e.l_adv},     {"mean_p", e.mean_p}, {"pass_rate", e.pass_rate},
                      {"classifier_steps_skipped", e.classifier_steps_skipped}, {"lr", e.lr}};
  j["l_disc"] = e.l_disc ? nlohmann::json(*e.l_disc) : nlohmann::json(nullptr);
  return j;
}

Stage2Result train_stage2(nn::UNet g, const nn::UNet& s_in, nn::PatchClassifier c, const DatasetPool& pool,
                          const AdvConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (pool.labeled.empty() || pool.unlabeled.empty()) {
    fail(ErrorCode::InsufficientPool, "stage 2 needs non-empty labeled and unlabeled pools");
  }
  Stage2Result out;
  out.seg_hash_before = nn::parameter_hash(s_in.parameters());
  nn::UNet s = s_in;
  s.set_trainable(false);

  const auto real = real_tumor_patches(pool.labeled, cfg.cls_patch);
  nn::AdamW opt_g(g.parameters(), {cfg.lr_synthesis, 0.9, 0.999, 1e-8, cfg.weight_decay});
  nn::AdamW opt_c(c.parameters(), {cfg.lr_synthesis, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const std::int64_t total = static_cast<std::int64_t>(cfg.stage2_epochs) * cfg.stage2_steps_per_epoch;
  DivergenceMonitor guard(cfg.guard, "stage-2 l_seg");
  Rng rng(Rng::derive(cfg.seed, 2));

  std::int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.stage2_epochs; ++epoch) {
    Stage2EpochLog el;
    el.epoch = epoch;
    double disc_sum = 0.0;
    int disc_n = 0;
    for (int k = 0; k < cfg.stage2_steps_per_epoch; ++k, ++step) {
      const double lr = nn::cosine_lr(cfg.lr_synthesis, step, total);
      el.lr = lr;

      // Generator step: C and S frozen.
      g.zero_grad();
      c.set_trainable(false);
      std::vector<Grid3<float>> fake;
      double l_seg = 0.0, p_sum = 0.0;
      std::vector<double> fake_logits;
      int passed = 0;
      for (int b = 0; b < cfg.batch; ++b) {
        const auto d = draw_synthesis_patch(pool.unlabeled, cfg, rng.fork());
        const GeneratorOutput gout(g.forward(nn::Tensor::from_grid(d.image.data)).to_grid());
        const auto xhat = apply_synthesis(d.image, d.mask, gout, cfg.filter);
        const auto logits = s.forward(nn::Tensor::from_grid(xhat.data));
        const auto sl = seg_loss_from_logits(logits, d.mask.mask);
        auto grad_xhat = s.backward(sl.grad).to_grid();

        Index3 origin;
        auto patch = crop_around(xhat.data, d.mask.mask, cfg.cls_patch, &origin);
        const double z = c.forward(nn::Tensor::from_grid(patch));
        const auto bl = bce_with_logit(z, 1.0);
        scatter_add(grad_xhat, c.backward(static_cast<float>(cfg.lambda_cls * bl.grad)), origin);

        g.backward(nn::Tensor::from_grid(synthesis_backward(d.image, d.mask.mask, gout, cfg.filter, grad_xhat)));

        const double p = proportion(sigmoid(logits), d.mask.mask);
        p_sum += p;
        passed += p >= cfg.threshold ? 1 : 0;
        l_seg += sl.value;
        fake_logits.push_back(z);
        fake.push_back(std::move(patch));
      }
      opt_g.step(lr, 1.0 / cfg.batch);

      Stage2StepLog sl;
      sl.epoch = epoch;
      sl.step = k;
      const auto bundle = make_loss_bundle(l_seg / cfg.batch, fake_logits, cfg.lambda_cls);
      sl.l_seg = bundle.l_seg;
      sl.l_cls = bundle.l_cls;
      sl.l_adv = bundle.l_adv;
      sl.mean_p = p_sum / cfg.batch;
      sl.pass_rate = static_cast<double>(passed) / cfg.batch;

      // Classifier step on detached synthetic patches vs real tumors.
      if (real.empty()) {
        ++el.classifier_steps_skipped;
      } else {
        c.set_trainable(true);
        c.zero_grad();
        std::vector<double> rl, fl;
        for (const auto& f : fake) {
          fl.push_back(c.forward(nn::Tensor::from_grid(f)));
          c.backward(static_cast<float>(bce_with_logit(fl.back(), 0.0).grad));
        }
        for (int b = 0; b < cfg.batch; ++b) {
          const auto& r = real[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(real.size()) - 1))];
          rl.push_back(c.forward(nn::Tensor::from_grid(r)));
          c.backward(static_cast<float>(bce_with_logit(rl.back(), 1.0).grad));
        }
        opt_c.step(lr, 1.0 / static_cast<double>(rl.size() + fl.size()));
        sl.l_disc = classifier_loss(rl, fl);
        disc_sum += *sl.l_disc;
        ++disc_n;
      }
      if (!std::isfinite(sl.l_adv)) {
        fail(ErrorCode::Diverged, "stage-2 loss not finite at epoch " + std::to_string(epoch));
      }
      el.l_seg += sl.l_seg;
      el.l_cls += sl.l_cls;
      el.l_adv += sl.l_adv;
      el.mean_p += sl.mean_p;
      el.pass_rate += sl.pass_rate;
      out.steps.push_back(sl);
    }
    const double n = cfg.stage2_steps_per_epoch;
    el.l_seg /= n;
    el.l_cls /= n;
    el.l_adv /= n;
    el.mean_p /= n;
    el.pass_rate /= n;
    if (disc_n) el.l_disc = disc_sum / disc_n;
    out.epochs.push_back(el);
    if (log) *log << to_json(el).dump() << '\n';
    guard.observe(epoch, el.l_seg);
  }
  c.set_trainable(true);
  out.generator = std::move(g);
  out.classifier = std::move(c);
  out.seg_hash_after = nn::parameter_hash(s_in.parameters());
  return out;
}

}  // namespace oncosynth
