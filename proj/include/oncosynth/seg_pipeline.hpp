#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <ostream>
#include <thread>
#include <vector>

#include "oncosynth/adversarial.hpp"
#include "oncosynth/dataset.hpp"
#include "oncosynth/quality_gate.hpp"
#include "oncosynth/seg_trainer.hpp"
#include "oncosynth/synthesis.hpp"

namespace oncosynth {

/// Raw generator field for an image.
using FieldFn = std::function<Grid3<float>(const Volume&)>;
/// Tumor probability map for an image.
using ProbFn = std::function<Grid3<float>(const Volume&)>;

/// Wrap networks (copied) as stream callables.
FieldFn generator_fn(const nn::UNet& g);
ProbFn segmenter_fn(const nn::UNet& s);

struct StreamConfig {
  double threshold = kDefaultQualityThreshold;
  FailedCasePolicy failed = FailedCasePolicy::UseOriginal;
  SizeSpec mask_size{};
  MaskSamplerConfig sampler{};
  GaussianFilterCfg filter{};
  std::uint64_t seed = 0;
  /// Capacity of the producer queue; 0 synthesizes on the caller's thread.
  int prefetch = 0;
};

struct StreamItem {
  Volume image;        // x_hat on pass, x on fail
  LabelMap tumor;      // M on pass, empty on fail
  LabelMap organ;
  QualityVerdict verdict;
  std::uint64_t draw = 0;

  /// Combined {0, organ, tumor} labels for training.
  TrainCase as_train_case() const;
};

/// Endless online synthesis over an unlabeled pool: draw a case, sample a
/// mask, synthesize, gate. Nothing is written to disk. The sequence depends
/// only on the seed, not on `prefetch`.
class SynthStream {
 public:
  SynthStream(std::vector<TrainCase> unlabeled, FieldFn g, ProbFn s, StreamConfig cfg, VerdictLog* verdicts = nullptr,
              std::ostream* skip_log = nullptr);
  ~SynthStream();
  SynthStream(const SynthStream&) = delete;
  SynthStream& operator=(const SynthStream&) = delete;

  StreamItem next();

  std::size_t skipped() const;

 private:
  StreamItem produce();
  StreamItem produce_one(std::uint64_t draw, bool& skipped);
  void worker();

  std::vector<TrainCase> pool_;
  FieldFn g_;
  ProbFn s_;
  StreamConfig cfg_;
  VerdictLog* verdicts_;
  std::ostream* skip_log_;
  std::uint64_t draw_ = 0;
  std::size_t skipped_ = 0;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<StreamItem> queue_;
  std::exception_ptr error_;
  bool stop_ = false;
  std::thread thread_;
};

struct SegTrainConfig {
  int ratio_labeled = 1;
  int ratio_synthetic = 1;
  double lr = 3e-3;
  double weight_decay = 1e-2;
  int batch = 4;
  int epochs = 100;
  std::uint64_t seed = 0;
  Shape3 patch{32, 32, 32};
  nn::UNetConfig net{1, 1, 4, 2, 0.1f, 0.0f, 0.6f, 10.0f};
  double tumor_centered_fraction = 0.67;
  bool flip_augment = true;
  DivergenceGuard guard{};
  StreamConfig stream{};

  void validate() const;
  /// Labeled crops per batch implied by the ratio.
  int labeled_per_batch() const;
  SegTrainerSettings trainer_settings() const;
};

/// Downstream training mixing labeled crops with online synthetic cases.
/// An empty unlabeled pool (or a zero synthetic share) is plain labeled training.
SegTrainResult train_segmentation(const DatasetPool& pool, const FieldFn& g, const ProbFn& s, const SegTrainConfig& cfg,
                                  std::ostream* log = nullptr, VerdictLog* verdicts = nullptr);

struct InferConfig {
  Shape3 window{32, 32, 32};
  double overlap = 0.5;
  double threshold = 0.5;
};

struct InferResult {
  LabelMap labels;
  Grid3<float> probs;
};

/// Sliding-window inference with uniform averaging over overlapping windows.
/// Volumes smaller than the window are zero-padded.
InferResult infer(nn::UNet& model, const Volume& v, const InferConfig& cfg = {});

/// Window start positions along one axis (exposed for tests).
std::vector<int> window_starts(int n, int w, double overlap);

}  // namespace oncosynth
