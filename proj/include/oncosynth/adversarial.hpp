#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "oncosynth/dataset.hpp"
#include "oncosynth/nn/classifier.hpp"
#include "oncosynth/nn/unet.hpp"
#include "oncosynth/quality_gate.hpp"
#include "oncosynth/seg_trainer.hpp"
#include "oncosynth/synthesis.hpp"
#include "oncosynth/tumor_mask.hpp"

namespace oncosynth {

struct AdvConfig {
  double lambda_cls = 0.1;
  double lr_synthesis = 1e-3;
  double lr_segmentation = 3e-3;
  double weight_decay = 1e-2;
  int batch = 4;
  int stage1_epochs = 100;
  int stage2_epochs = 100;
  int stage2_steps_per_epoch = 10;
  std::uint64_t seed = 0;

  Shape3 seg_patch{32, 32, 32};
  Shape3 synth_patch{48, 48, 48};
  Shape3 cls_patch{24, 24, 24};
  nn::UNetConfig seg_net{1, 1, 4, 2, 0.1f, 0.0f, 0.6f, 10.0f};
  nn::UNetConfig gen_net{1, 1, 2, 2, 0.1f, 0.0f, 0.6f, 10.0f};
  nn::ClassifierConfig cls_net{1, 4, 0.1f};

  GaussianFilterCfg filter{};
  SizeSpec mask_size{};
  MaskSamplerConfig sampler{};
  double threshold = kDefaultQualityThreshold;
  double tumor_centered_fraction = 0.67;
  bool flip_augment = true;
  DivergenceGuard guard{};

  void validate() const;
  /// Trainer settings used by train_stage1.
  SegTrainerSettings stage1_settings() const;
};

struct LossBundle {
  double l_seg = 0.0;
  double l_cls = 0.0;
  double l_adv = 0.0;
};

/// Generator-step losses: l_cls is the BCE of C against the "real" label
/// (flipped), l_adv = lambda * l_cls + l_seg.
LossBundle make_loss_bundle(double l_seg, std::span<const double> synthetic_logits, double lambda_cls);

/// Classifier-step loss: mean BCE over real (label 1) and synthetic (label 0)
/// logits. nullopt when either side is empty, i.e. the step must be skipped.
std::optional<double> classifier_loss(std::span<const double> real_logits, std::span<const double> synthetic_logits);

/// Runs S and C on one synthesized patch and returns the generator-step bundle.
LossBundle compute_adv_losses(const Volume& xhat, const LabelMap& mask, nn::UNet& s, nn::PatchClassifier& c,
                              const AdvConfig& cfg);

/// Origin of the box of `size` centred on the mask's centroid.
Index3 mask_centered_origin(const LabelMap& mask, Shape3 size);

/// Stage 1: Dice-CE segmentation training on labeled cases. Throws
/// EmptyMask when no case has a tumor voxel.
SegTrainResult train_stage1(const std::vector<TrainCase>& labeled, const AdvConfig& cfg, std::ostream* log = nullptr);

struct Stage2StepLog {
  int epoch = 0;
  int step = 0;
  double l_seg = 0.0;
  double l_cls = 0.0;
  double l_adv = 0.0;
  std::optional<double> l_disc;  // nullopt: classifier step skipped
  double mean_p = 0.0;
  double pass_rate = 0.0;
};

struct Stage2EpochLog {
  int epoch = 0;
  double l_seg = 0.0;
  double l_cls = 0.0;
  double l_adv = 0.0;
  std::optional<double> l_disc;
  double mean_p = 0.0;
  double pass_rate = 0.0;
  int classifier_steps_skipped = 0;
  double lr = 0.0;
};

struct Stage2Result {
  nn::UNet generator;
  nn::PatchClassifier classifier;
  std::vector<Stage2EpochLog> epochs;
  std::vector<Stage2StepLog> steps;
  std::uint64_t seg_hash_before = 0;
  std::uint64_t seg_hash_after = 0;
};

/// Stage 2: alternate one generator step and one classifier step. S is
/// frozen (only used for its input gradient). Per-epoch records go to `log`
/// as JSON lines.
Stage2Result train_stage2(nn::UNet g, const nn::UNet& s, nn::PatchClassifier c, const DatasetPool& pool,
                          const AdvConfig& cfg, std::ostream* log = nullptr);

/// A synthesis draw on an unlabeled case: organ-centred crop and mask.
struct SynthesisDraw {
  Volume image;
  LabelMap organ;
  TumorMask mask;
};

/// Deterministic in (cases, seed). Retries other cases when the organ is too
/// small; throws InsufficientPool after `max_tries` failures.
SynthesisDraw draw_synthesis_patch(const std::vector<TrainCase>& cases, const AdvConfig& cfg, std::uint64_t seed,
                                   int max_tries = 16);

struct GeneratorEval {
  double mean_p = 0.0;
  double pass_rate = 0.0;
  std::vector<QualityVerdict> verdicts;
};

/// Mean gate proportion of `g` judged by frozen `s` on `n` draws from `cases`.
/// The draws depend only on `seed`, so two generators see identical inputs.
GeneratorEval evaluate_generator(const nn::UNet& g, const nn::UNet& s, const std::vector<TrainCase>& cases, int n,
                                 const AdvConfig& cfg, std::uint64_t seed);

nlohmann::json to_json(const Stage2EpochLog& e);

}  // namespace oncosynth
