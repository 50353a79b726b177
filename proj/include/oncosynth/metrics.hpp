#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oncosynth/volume.hpp"

namespace oncosynth {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Percentages; nullopt marks a 0/0 ratio.
struct ConfusionMetrics {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

ConfusionMetrics confusion_metrics(const ConfusionCounts& c);

/// 2|A n B| / (|A| + |B|) in percent; 100 when both are empty.
double dice(const LabelMap& pre, const LabelMap& gro);

/// Per-instance hit flags: detected iff the prediction touches the instance.
/// Throws InvalidArgument when two instances share a voxel.
std::vector<bool> detect_instances(const LabelMap& pred, const std::vector<LabelMap>& instances);

struct SizeStrata {
  std::vector<std::size_t> small;  // indices into the instance list
  std::vector<std::size_t> large;
};

/// Small means measured diameter < 20 mm.
SizeStrata stratify_small(const std::vector<LabelMap>& instances);
SizeStrata stratify_small(const std::vector<double>& diameters_mm);

/// Deterministic near-equal partition of `ids` into k folds.
std::vector<std::vector<std::string>> kfold_split(const std::vector<std::string>& ids, int k, std::uint64_t seed);

struct InstanceResult {
  double diameter_mm = 0.0;
  std::size_t voxels = 0;
  bool small = false;
  bool detected = false;
};

struct CaseEval {
  std::string id;
  double dice = 0.0;
  bool gt_positive = false;
  bool pred_positive = false;
  std::vector<InstanceResult> instances;
  std::size_t false_positive_components = 0;
};

/// Evaluates a binary tumor prediction against a binary ground truth.
CaseEval evaluate_case(const std::string& id, const LabelMap& pred, const LabelMap& gt);

struct BucketSensitivity {
  std::size_t instances = 0;
  std::size_t detected = 0;
  std::optional<double> sensitivity;
};

struct MetricsReport {
  std::vector<CaseEval> cases;
  double dice = 0.0;                 // mean of per-case Dice
  ConfusionCounts volume;            // volume-level tumor presence
  ConfusionMetrics volume_metrics;
  ConfusionCounts instance;          // tp/fn over gt instances, fp over unmatched predicted components
  ConfusionMetrics instance_metrics;
  BucketSensitivity small;
  BucketSensitivity large;
};

MetricsReport aggregate(std::vector<CaseEval> cases);

nlohmann::json to_json(const ConfusionCounts& c);
nlohmann::json to_json(const ConfusionMetrics& m);
nlohmann::json to_json(const MetricsReport& r);
/// One row per case: id, dice, gt/pred positive, instance counts.
std::string to_csv(const MetricsReport& r);

}  // namespace oncosynth
