#include "oncosynth/morphology.hpp"

#include <algorithm>

namespace oncosynth {

Grid3<std::uint8_t> erode(const Grid3<std::uint8_t>& mask, int radius) {
  const auto s = mask.shape();
  if (radius <= 0) return mask;
  // Separable min filter: a cube erosion is the composition of three 1-D erosions.
  Grid3<std::uint8_t> tmp = mask;
  for (int axis = 0; axis < 3; ++axis) {
    Grid3<std::uint8_t> next(s, 0);
    for (int z = 0; z < s.nz; ++z) {
      for (int y = 0; y < s.ny; ++y) {
        for (int x = 0; x < s.nx; ++x) {
          if (!tmp(x, y, z)) continue;
          bool keep = true;
          for (int d = -radius; d <= radius && keep; ++d) {
            const int xx = axis == 0 ? x + d : x;
            const int yy = axis == 1 ? y + d : y;
            const int zz = axis == 2 ? z + d : z;
            keep = tmp.contains(xx, yy, zz) && tmp(xx, yy, zz) != 0;
          }
          next(x, y, z) = keep ? 1 : 0;
        }
      }
    }
    tmp = std::move(next);
  }
  return tmp;
}

Grid3<int> connected_components(const Grid3<std::uint8_t>& mask, int& count) {
  const auto s = mask.shape();
  Grid3<int> ids(s, 0);
  count = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || ids[start] != 0) continue;
    const int id = ++count;
    ids[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const auto at = mask.index_of(stack.back());
      stack.pop_back();
      for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int x = at.x + dx, y = at.y + dy, z = at.z + dz;
            if (!mask.contains(x, y, z)) continue;
            const auto o = mask.offset(x, y, z);
            if (mask[o] && ids[o] == 0) {
              ids[o] = id;
              stack.push_back(o);
            }
          }
        }
      }
    }
  }
  return ids;
}

std::vector<LabelMap> split_instances(const LabelMap& mask) {
  int n = 0;
  const auto ids = connected_components(mask.data, n);
  std::vector<LabelMap> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k) {
    Grid3<std::uint8_t> g(mask.shape(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = ids[i] == k ? 1 : 0;
    out.emplace_back(std::move(g), mask.spacing);
  }
  return out;
}

}  // namespace oncosynth
