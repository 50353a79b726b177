#pragma once

#include <cstdint>

#include "oncosynth/volume.hpp"

namespace oncosynth {

enum class CropPolicy { Random, TumorCentered, OrganCentered };

struct CropResult {
  Volume image;
  LabelMap labels;
  Index3 origin;            // position of the crop's (0,0,0) in the source grid; may be negative
  bool fell_back = false;   // requested centre class was absent
};

/// Paired crop of an image and its combined label map ({0, organ, tumor}).
/// Regions outside the source are padded with `pad_value` (image) and 0 (labels).
/// Tumor-centred crops without tumor voxels fall back to organ-centred, and
/// organ-centred crops without organ voxels fall back to random; both set
/// `fell_back`.
CropResult crop_patch(const Volume& v, const LabelMap& labels, Shape3 size, CropPolicy policy,
                      std::uint64_t seed, std::uint8_t tumor_class = 2, float pad_value = 0.0f);

/// Extract the box [origin, origin + size) with padding.
Grid3<float> extract_box(const Grid3<float>& g, Index3 origin, Shape3 size, float pad_value = 0.0f);
Grid3<std::uint8_t> extract_box(const Grid3<std::uint8_t>& g, Index3 origin, Shape3 size,
                                std::uint8_t pad_value = 0);

}  // namespace oncosynth
