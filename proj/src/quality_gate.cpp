#include "oncosynth/quality_gate.hpp"

namespace oncosynth {

double proportion(const Grid3<float>& probs, const LabelMap& mask, double bin_thresh) {
  require_same_shape(probs.shape(), mask.shape(), "proportion");
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!mask.data[i]) continue;
    ++total;
    if (probs[i] >= bin_thresh) ++hit;
  }
  if (total == 0) fail(ErrorCode::EmptyMask, "proportion: empty tumor mask");
  return static_cast<double>(hit) / static_cast<double>(total);
}

QualityVerdict judge(const Grid3<float>& probs, const LabelMap& mask, double threshold,
                     const std::string& case_id, double bin_thresh) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "quality threshold must be in (0, 1]");
  }
  QualityVerdict v;
  v.case_id = case_id;
  v.proportion = proportion(probs, mask, bin_thresh);
  v.threshold = threshold;
  v.passed = v.proportion >= threshold;
  v.mask_voxels = mask.count_nonzero();
  return v;
}

std::pair<Volume, QualityVerdict> gate(const Volume& original, const Volume& synthetic,
                                       const Grid3<float>& probs, const LabelMap& mask,
                                       double threshold, double bin_thresh) {
  require_same_shape(original.shape(), synthetic.shape(), "gate");
  auto verdict = judge(probs, mask, threshold, synthetic.id.empty() ? original.id : synthetic.id, bin_thresh);
  return {verdict.passed ? synthetic : original, std::move(verdict)};
}

nlohmann::json to_json(const QualityVerdict& v) {
  return {{"case", v.case_id}, {"P", v.proportion}, {"T", v.threshold},
          {"passed", v.passed}, {"mask_voxels", v.mask_voxels}};
}

void VerdictLog::append(const QualityVerdict& v) {
  std::lock_guard lock(mu_);
  ++count_;
  if (v.passed) ++passed_;
  if (out_) *out_ << to_json(v).dump() << '\n';
}

std::size_t VerdictLog::count() const {
  std::lock_guard lock(mu_);
  return count_;
}

std::size_t VerdictLog::passed() const {
  std::lock_guard lock(mu_);
  return passed_;
}

}  // namespace oncosynth
