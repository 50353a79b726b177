#include "oncosynth/seg_trainer.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "oncosynth/crop.hpp"
#include "oncosynth/losses.hpp"
#include "oncosynth/nn/optim.hpp"
#include "oncosynth/rng.hpp"

namespace oncosynth {

void DivergenceMonitor::observe(int epoch, double mean) {
  if (!std::isfinite(mean)) {
    fail(ErrorCode::Diverged, what_ + " is not finite at epoch " + std::to_string(epoch));
  }
  if (!initial_) {
    initial_ = mean;
    return;
  }
  streak_ = mean > g_.factor * *initial_ ? streak_ + 1 : 0;
  if (streak_ >= g_.patience) {
    std::ostringstream os;
    os << what_ << " diverged: epoch " << epoch << " mean " << mean << " exceeded " << g_.factor
       << "x the initial " << *initial_ << " for " << streak_ << " consecutive epochs";
    fail(ErrorCode::Diverged, os.str());
  }
}

void SegTrainerSettings::validate() const {
  if (!(lr > 0.0)) fail(ErrorCode::InvalidArgument, "learning rate must be > 0");
  if (weight_decay < 0.0) fail(ErrorCode::InvalidArgument, "weight decay must be >= 0");
  if (batch < 1) fail(ErrorCode::InvalidArgument, "batch must be >= 1");
  if (labeled_per_batch < 0 || labeled_per_batch > batch) {
    fail(ErrorCode::InvalidArgument, "labeled_per_batch must be in [0, batch]");
  }
  if (epochs < 1) fail(ErrorCode::InvalidArgument, "epochs must be >= 1");
  const int gran = net.granularity();
  if (!patch.valid() || patch.nx % gran || patch.ny % gran || patch.nz % gran) {
    fail(ErrorCode::InvalidArgument, "patch dims must be positive multiples of " + std::to_string(gran));
  }
  if (tumor_centered_fraction < 0.0 || tumor_centered_fraction > 1.0) {
    fail(ErrorCode::InvalidArgument, "tumor_centered_fraction must be in [0, 1]");
  }
}

template <typename T>
Grid3<T> flip_axes(const Grid3<T>& g, unsigned axes) {
  if ((axes & 7u) == 0) return g;
  const auto s = g.shape();
  Grid3<T> out(s);
  for (int z = 0; z < s.nz; ++z) {
    const auto sz = (axes & 4u) ? s.nz - 1 - z : z;
    for (int y = 0; y < s.ny; ++y) {
      const auto sy = (axes & 2u) ? s.ny - 1 - y : y;
      for (int x = 0; x < s.nx; ++x) {
        const auto sx = (axes & 1u) ? s.nx - 1 - x : x;
        out(x, y, z) = g(sx, sy, sz);
      }
    }
  }
  return out;
}

template Grid3<float> flip_axes(const Grid3<float>&, unsigned);
template Grid3<std::uint8_t> flip_axes(const Grid3<std::uint8_t>&, unsigned);

namespace {

/// One crop-and-step of a single sample; returns its loss.
double accumulate_sample(nn::UNet& net, const TrainCase& c, CropPolicy policy, const SegTrainerSettings& s,
                         Rng& rng) {
  const auto crop = crop_patch(c.image, c.labels, s.patch, policy, rng.fork(), kTumorClass);
  const unsigned axes = s.flip_augment ? static_cast<unsigned>(rng.next_u64() & 7u) : 0u;
  const auto img = flip_axes(crop.image.data, axes);
  Grid3<std::uint8_t> target(s.patch);
  const auto lab = flip_axes(crop.labels.data, axes);
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = lab[i] == kTumorClass ? 1 : 0;

  const auto logits = net.forward(nn::Tensor::from_grid(img));
  auto lg = dice_ce_loss(logits, target);
  net.backward(lg.grad);
  return lg.value;
}

}  // namespace

SegTrainResult run_seg_training(const std::vector<TrainCase>& labeled, const SegTrainerSettings& s,
                                const SampleSource* synthetic, std::ostream* log) {
  s.validate();
  const int n_syn = s.batch - s.labeled_per_batch;
  if (s.labeled_per_batch > 0 && labeled.empty()) fail(ErrorCode::InvalidArgument, "no labeled cases");
  if (n_syn > 0 && !synthetic) fail(ErrorCode::InvalidArgument, "synthetic share > 0 but no synthetic source");
  if (labeled.empty()) fail(ErrorCode::InvalidArgument, "no labeled cases to define an epoch");

  Rng rng(s.seed);
  SegTrainResult out;
  out.model = nn::UNet(s.net, rng.fork());
  nn::AdamW opt(out.model.parameters(), {s.lr, 0.9, 0.999, 1e-8, s.weight_decay});

  const int per_step = std::max(s.labeled_per_batch, 1);
  const int steps_per_epoch = static_cast<int>((labeled.size() + per_step - 1) / per_step);
  const std::int64_t total = static_cast<std::int64_t>(steps_per_epoch) * s.epochs;
  DivergenceMonitor guard(s.guard, "segmentation loss");

  std::vector<std::size_t> order(labeled.size());
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= s.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    std::size_t cursor = 0;
    SegEpochLog el;
    el.epoch = epoch;
    double sum = 0.0;
    for (int k = 0; k < steps_per_epoch; ++k, ++step) {
      out.model.zero_grad();
      double loss = 0.0;
      for (int b = 0; b < s.labeled_per_batch; ++b) {
        const auto& c = labeled[order[cursor++ % order.size()]];
        const auto policy = rng.uniform() < s.tumor_centered_fraction ? CropPolicy::TumorCentered
                                                                      : CropPolicy::OrganCentered;
        loss += accumulate_sample(out.model, c, policy, s, rng);
      }
      for (int b = 0; b < n_syn; ++b) {
        const auto c = (*synthetic)();
        const bool tumor = c.has_tumor();
        loss += accumulate_sample(out.model, c, tumor ? CropPolicy::TumorCentered : CropPolicy::OrganCentered, s,
                                  rng);
        ++el.synthetic_samples;
        if (tumor) ++el.synthetic_with_tumor;
      }
      loss /= s.batch;
      if (!std::isfinite(loss)) {
        fail(ErrorCode::Diverged, "segmentation loss not finite at epoch " + std::to_string(epoch) + " step " +
                                      std::to_string(k));
      }
      el.lr = nn::cosine_lr(s.lr, step, total);
      opt.step(el.lr, 1.0 / s.batch);
      out.step_losses.push_back(loss);
      sum += loss;
    }
    el.steps = steps_per_epoch;
    el.loss_mean = sum / steps_per_epoch;
    out.epochs.push_back(el);
    if (log) {
      *log << nlohmann::json{{"epoch", el.epoch},          {"loss", el.loss_mean},
                             {"lr", el.lr},                {"steps", el.steps},
                             {"synthetic", el.synthetic_samples}, {"synthetic_with_tumor", el.synthetic_with_tumor}}
                  .dump()
           << '\n';
    }
    guard.observe(epoch, el.loss_mean);
  }
  return out;
}

}  // namespace oncosynth
