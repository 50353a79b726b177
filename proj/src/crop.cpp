#include "oncosynth/crop.hpp"

#include <algorithm>
#include <optional>
#include <vector>

#include "oncosynth/rng.hpp"

namespace oncosynth {
namespace {

template <typename T>
Grid3<T> box(const Grid3<T>& g, Index3 o, Shape3 size, T pad) {
  Grid3<T> out(size, pad);
  for (int z = 0; z < size.nz; ++z)
    for (int y = 0; y < size.ny; ++y)
      for (int x = 0; x < size.nx; ++x) {
        const int sx = o.x + x, sy = o.y + y, sz = o.z + z;
        if (g.contains(sx, sy, sz)) out(x, y, z) = g(sx, sy, sz);
      }
  return out;
}

int place(int centre, int extent, int size) {
  const int lo = std::min(0, extent - size);
  const int hi = std::max(0, extent - size);
  return std::clamp(centre - size / 2, lo, hi);
}

}  // namespace

Grid3<float> extract_box(const Grid3<float>& g, Index3 origin, Shape3 size, float pad_value) {
  return box(g, origin, size, pad_value);
}

Grid3<std::uint8_t> extract_box(const Grid3<std::uint8_t>& g, Index3 origin, Shape3 size,
                                std::uint8_t pad_value) {
  return box(g, origin, size, pad_value);
}

CropResult crop_patch(const Volume& v, const LabelMap& labels, Shape3 size, CropPolicy policy,
                      std::uint64_t seed, std::uint8_t tumor_class, float pad_value) {
  require_same_shape(v.shape(), labels.shape(), "crop_patch");
  if (!size.valid()) fail(ErrorCode::InvalidArgument, "crop_patch: crop size must be >= 1");
  const auto s = v.shape();
  Rng rng(seed);

  auto pick = [&](auto pred) -> std::optional<Index3> {
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < labels.data.size(); ++i)
      if (pred(labels.data[i])) hits.push_back(i);
    if (hits.empty()) return std::nullopt;
    return labels.data.index_of(hits[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(hits.size()) - 1))]);
  };

  CropResult out;
  std::optional<Index3> centre;
  if (policy == CropPolicy::TumorCentered) {
    centre = pick([&](std::uint8_t l) { return l == tumor_class; });
    if (!centre) {
      out.fell_back = true;
      policy = CropPolicy::OrganCentered;
    }
  }
  if (policy == CropPolicy::OrganCentered && !centre) {
    centre = pick([](std::uint8_t l) { return l != 0; });
    if (!centre) {
      out.fell_back = true;
      policy = CropPolicy::Random;
    }
  }

  Index3 origin;
  if (centre) {
    origin = {place(centre->x, s.nx, size.nx), place(centre->y, s.ny, size.ny),
              place(centre->z, s.nz, size.nz)};
  } else {
    auto rand_start = [&](int extent, int sz) {
      const int lo = std::min(0, extent - sz), hi = std::max(0, extent - sz);
      return extent >= sz ? rng.uniform_int(lo, hi) : (extent - sz) / 2;
    };
    origin = {rand_start(s.nx, size.nx), rand_start(s.ny, size.ny), rand_start(s.nz, size.nz)};
  }

  out.origin = origin;
  out.image = Volume(box(v.data, origin, size, pad_value), v.spacing, v.id);
  out.labels = LabelMap(box(labels.data, origin, size, std::uint8_t{0}), labels.spacing, labels.classes);
  return out;
}

}  // namespace oncosynth
