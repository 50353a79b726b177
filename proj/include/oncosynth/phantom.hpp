#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oncosynth/volume.hpp"

namespace oncosynth {

/// Procedural abdomen-like test volume: smooth soft-tissue background, one
/// axis-aligned ellipsoidal organ, and a number of darker "real" tumors
/// fully inside the organ. Intensities are in HU.
struct PhantomConfig {
  Shape3 shape{48, 48, 48};
  Spacing spacing{2.0, 2.0, 2.0};
  double organ_radius_lo_mm = 24.0;
  double organ_radius_hi_mm = 34.0;
  int tumor_count_lo = 1;
  int tumor_count_hi = 3;
  double tumor_diameter_lo_mm = 8.0;
  double tumor_diameter_hi_mm = 28.0;
  double tumor_offset_lo_hu = -90.0;
  double tumor_offset_hi_hu = -40.0;
  double noise_hu = 14.0;
  double organ_hu = 120.0;
  double background_hu = 40.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PhantomCase {
  Volume image;        // HU
  LabelMap organ;      // binary
  LabelMap tumor;      // binary, subset of organ
  std::vector<double> tumor_diameters_mm;  // nominal in-plane diameter per placed tumor
};

/// Pure function of `cfg`.
PhantomCase generate_phantom(const PhantomConfig& cfg, const std::string& id = {});

/// Tumor class value in combined label maps.
inline constexpr std::uint8_t kOrganClass = 1;
inline constexpr std::uint8_t kTumorClass = 2;

/// {0 background, 1 organ, 2 tumor}; tumor voxels take precedence.
LabelMap combine_labels(const LabelMap& organ, const LabelMap& tumor);

}  // namespace oncosynth
