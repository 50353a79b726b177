#pragma once

#include <cstdint>
#include <string>

#include "oncosynth/volume.hpp"

namespace oncosynth {

/// Binary placement mask M for one synthetic tumor.
struct TumorMask {
  LabelMap mask;
  double diameter_mm = 0.0;
  std::uint64_t placement_seed = 0;

  std::size_t voxel_count() const { return mask.count_nonzero(); }
};

enum class SizeCategory { Any, Small };

/// Threshold separating small (early-stage) tumors from the rest.
inline constexpr double kSmallTumorDiameterMm = 20.0;

struct SizeSpec {
  double lo_mm = 5.0;
  double hi_mm = 30.0;
  SizeCategory category = SizeCategory::Any;

  void validate() const;
  /// Upper bound after applying the category.
  double effective_hi() const;
};

struct MaskSamplerConfig {
  std::size_t min_organ_voxels = 200;  // after 1-voxel erosion
  int max_attempts = 20;
  double boundary_noise = 0.15;        // amplitude of the radial perturbation
  double noise_sigma_voxels = 1.5;
};

/// Ellipsoid with random axes and in-plane orientation, boundary-perturbed
/// by smoothed noise, intersected with the organ eroded by one voxel and
/// reduced to a single 26-connected component. Retries until the measured
/// diameter is within the spec +-1 voxel. Pure function of its arguments.
TumorMask sample_tumor_mask(const LabelMap& organ, const SizeSpec& spec, std::uint64_t seed,
                            const MaskSamplerConfig& cfg = {}, const std::string& case_id = {});

/// Largest axial extent over slices: max pairwise centre distance between
/// mask voxels of one z-slice, plus one in-plane voxel width (mm).
double measure_diameter(const LabelMap& mask);
inline double measure_diameter(const TumorMask& m) { return measure_diameter(m.mask); }

}  // namespace oncosynth
