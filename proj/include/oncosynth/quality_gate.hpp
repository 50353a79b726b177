#pragma once

#include <mutex>
#include <ostream>
#include <string>
#include <utility>

#include "json.hpp"
#include "oncosynth/volume.hpp"

namespace oncosynth {

inline constexpr double kDefaultQualityThreshold = 0.7;

struct QualityVerdict {
  std::string case_id;
  double proportion = 0.0;  // P
  double threshold = kDefaultQualityThreshold;  // T
  bool passed = false;      // P >= T
  std::size_t mask_voxels = 0;
};

/// What happens to cases that fail the quality test.
enum class FailedCasePolicy {
  UseOriginal,  // keep the untouched image as a tumor-free sample
  Drop,         // discard the draw entirely
};

/// Fraction of mask voxels that the segmenter marks as tumor
/// (probability >= bin_thresh). Throws EmptyMask.
double proportion(const Grid3<float>& probs, const LabelMap& mask, double bin_thresh = 0.5);

QualityVerdict judge(const Grid3<float>& probs, const LabelMap& mask, double threshold,
                     const std::string& case_id = {}, double bin_thresh = 0.5);

/// Returns the synthetic image when the verdict passes and the original otherwise.
std::pair<Volume, QualityVerdict> gate(const Volume& original, const Volume& synthetic,
                                       const Grid3<float>& probs, const LabelMap& mask,
                                       double threshold, double bin_thresh = 0.5);

nlohmann::json to_json(const QualityVerdict& v);

/// Append-only JSON-lines sink, safe to share between threads.
class VerdictLog {
 public:
  explicit VerdictLog(std::ostream* out = nullptr) : out_(out) {}
  void append(const QualityVerdict& v);
  std::size_t count() const;
  std::size_t passed() const;

 private:
  mutable std::mutex mu_;
  std::ostream* out_;
  std::size_t count_ = 0;
  std::size_t passed_ = 0;
};

}  // namespace oncosynth
