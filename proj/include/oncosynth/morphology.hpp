#pragma once

#include <cstdint>
#include <vector>

#include "oncosynth/volume.hpp"

namespace oncosynth {

/// Binary erosion by a (2r+1)^3 cube; voxels outside the grid count as background.
Grid3<std::uint8_t> erode(const Grid3<std::uint8_t>& mask, int radius = 1);

/// 26-connected component labelling of the non-zero voxels.
/// Returns component ids (0 = background, 1..n) and sets `count` to n.
Grid3<int> connected_components(const Grid3<std::uint8_t>& mask, int& count);

/// Split a binary map into its 26-connected components, each as its own
/// binary map, ordered by first voxel in memory order.
std::vector<LabelMap> split_instances(const LabelMap& mask);

}  // namespace oncosynth
