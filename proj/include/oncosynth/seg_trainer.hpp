#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "oncosynth/dataset.hpp"
#include "oncosynth/nn/unet.hpp"

namespace oncosynth {

/// Abort when the epoch-mean loss stays above `factor` x its first-epoch
/// value for `patience` consecutive epochs.
struct DivergenceGuard {
  double factor = 2.0;
  int patience = 5;
};

/// Tracks the guard over epoch means; throws Diverged with a message naming `what`.
class DivergenceMonitor {
 public:
  DivergenceMonitor(DivergenceGuard g, std::string what) : g_(g), what_(std::move(what)) {}
  void observe(int epoch, double epoch_mean);

 private:
  DivergenceGuard g_;
  std::string what_;
  std::optional<double> initial_;
  int streak_ = 0;
};

struct SegTrainerSettings {
  double lr = 3e-3;
  double weight_decay = 1e-2;
  int batch = 4;
  int labeled_per_batch = 4;  // the rest of each batch comes from the synthetic source
  int epochs = 100;
  Shape3 patch{32, 32, 32};
  nn::UNetConfig net{};
  double tumor_centered_fraction = 0.67;  // of labeled crops; the rest are organ-centred
  bool flip_augment = true;
  std::uint64_t seed = 0;
  DivergenceGuard guard{};

  void validate() const;
};

/// Full-size training case from an external source (image + combined labels).
using SampleSource = std::function<TrainCase()>;

struct SegEpochLog {
  int epoch = 0;
  double loss_mean = 0.0;
  double lr = 0.0;
  int steps = 0;
  int synthetic_samples = 0;
  int synthetic_with_tumor = 0;
};

struct SegTrainResult {
  nn::UNet model;
  std::vector<SegEpochLog> epochs;
  std::vector<double> step_losses;
};

/// Dice-CE training of a segmentation UNet on random patches. One epoch is
/// ceil(#labeled / labeled_per_batch) steps; each step takes labeled_per_batch
/// labeled crops and batch - labeled_per_batch crops of samples drawn from
/// `synthetic`. Gradients are averaged over the batch; cosine lr schedule.
/// Epoch records are written as JSON lines to `log` when given.
SegTrainResult run_seg_training(const std::vector<TrainCase>& labeled, const SegTrainerSettings& s,
                                const SampleSource* synthetic = nullptr, std::ostream* log = nullptr);

/// Flip a grid along the axes whose bit is set (bit 0 = x, 1 = y, 2 = z).
template <typename T>
Grid3<T> flip_axes(const Grid3<T>& g, unsigned axes);

}  // namespace oncosynth
