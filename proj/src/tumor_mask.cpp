#include "oncosynth/tumor_mask.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "oncosynth/filters.hpp"
#include "oncosynth/morphology.hpp"
#include "oncosynth/rng.hpp"

namespace oncosynth {

void SizeSpec::validate() const {
  if (!(lo_mm > 0.0 && lo_mm < hi_mm)) fail(ErrorCode::InvalidArgument, "size spec requires 0 < lo < hi");
  if (category == SizeCategory::Small && lo_mm >= kSmallTumorDiameterMm) {
    fail(ErrorCode::InvalidArgument, "small size spec must start below 20 mm");
  }
}

double SizeSpec::effective_hi() const {
  return category == SizeCategory::Small ? std::min(hi_mm, kSmallTumorDiameterMm) : hi_mm;
}

double measure_diameter(const LabelMap& mask) {
  const auto& g = mask.data;
  const auto s = g.shape();
  const double sx = mask.spacing.x, sy = mask.spacing.y;
  double best_sq = -1.0;
  std::vector<std::pair<int, int>> edge;
  for (int z = 0; z < s.nz; ++z) {
    edge.clear();
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        if (!g(x, y, z)) continue;
        // Extreme points of a slice are always on its 4-connected boundary.
        const bool interior = g.contains(x - 1, y, z) && g(x - 1, y, z) && g.contains(x + 1, y, z) &&
                              g(x + 1, y, z) && g.contains(x, y - 1, z) && g(x, y - 1, z) &&
                              g.contains(x, y + 1, z) && g(x, y + 1, z);
        if (!interior) edge.emplace_back(x, y);
      }
    for (std::size_t i = 0; i < edge.size(); ++i) {
      best_sq = std::max(best_sq, 0.0);
      for (std::size_t j = i + 1; j < edge.size(); ++j) {
        const double dx = (edge[i].first - edge[j].first) * sx;
        const double dy = (edge[i].second - edge[j].second) * sy;
        best_sq = std::max(best_sq, dx * dx + dy * dy);
      }
    }
  }
  if (best_sq < 0.0) fail(ErrorCode::EmptyMask, "measure_diameter: empty mask");
  return std::sqrt(best_sq) + 0.5 * (sx + sy);
}

TumorMask sample_tumor_mask(const LabelMap& organ, const SizeSpec& spec, std::uint64_t seed,
                            const MaskSamplerConfig& cfg, const std::string& case_id) {
  spec.validate();
  const auto s = organ.shape();
  const auto sp = organ.spacing;
  const std::string who = case_id.empty() ? std::string("<unnamed>") : case_id;

  Grid3<std::uint8_t> binary(s, 0);
  for (std::size_t i = 0; i < binary.size(); ++i) binary[i] = organ.data[i] != 0 ? 1 : 0;
  const auto host = erode(binary, 1);
  std::vector<std::size_t> host_voxels;
  for (std::size_t i = 0; i < host.size(); ++i)
    if (host[i]) host_voxels.push_back(i);
  if (host_voxels.size() < cfg.min_organ_voxels) {
    fail(ErrorCode::OrganTooSmall, "case '" + who + "': organ has " + std::to_string(host_voxels.size()) +
                                       " voxels after erosion, need " +
                                       std::to_string(cfg.min_organ_voxels));
  }

  const double hi = spec.effective_hi();
  const double tol = std::max(sp.x, sp.y);
  const double accept_lo = spec.lo_mm - tol;
  const double accept_hi = spec.category == SizeCategory::Small
                               ? std::min(hi + tol, kSmallTumorDiameterMm)
                               : hi + tol;
  Rng rng(seed);

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const double d = rng.uniform(spec.lo_mm, hi);
    const double rx = d / 2.0;
    const double ry = d / 2.0 * rng.uniform(0.7, 1.0);
    const double rz = d / 2.0 * rng.uniform(0.7, 1.0);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double ct = std::cos(theta), st = std::sin(theta);
    const auto c = host.index_of(host_voxels[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(host_voxels.size()) - 1))]);

    const double reach = rx * (1.0 + 2.0 * cfg.boundary_noise);
    const int hx = static_cast<int>(std::ceil(reach / sp.x)) + 1;
    const int hy = static_cast<int>(std::ceil(reach / sp.y)) + 1;
    const int hz = static_cast<int>(std::ceil(reach / sp.z)) + 1;
    const Shape3 local{2 * hx + 1, 2 * hy + 1, 2 * hz + 1};
    const auto noise = smooth_noise(local, cfg.noise_sigma_voxels, rng.fork());

    Grid3<std::uint8_t> m(s, 0);
    for (int lz = 0; lz < local.nz; ++lz)
      for (int ly = 0; ly < local.ny; ++ly)
        for (int lx = 0; lx < local.nx; ++lx) {
          const int x = c.x + lx - hx, y = c.y + ly - hy, z = c.z + lz - hz;
          if (!host.contains(x, y, z) || !host(x, y, z)) continue;
          const double dx = (x - c.x) * sp.x, dy = (y - c.y) * sp.y, dz = (z - c.z) * sp.z;
          const double u = ct * dx + st * dy, v = -st * dx + ct * dy;
          const double rho = std::sqrt((u / rx) * (u / rx) + (v / ry) * (v / ry) + (dz / rz) * (dz / rz));
          if (rho + cfg.boundary_noise * noise(lx, ly, lz) <= 1.0) m(x, y, z) = 1;
        }

    int n = 0;
    const auto ids = connected_components(m, n);
    if (n == 0) continue;
    int keep = ids(c.x, c.y, c.z);
    if (keep == 0) {
      std::vector<std::size_t> sizes(static_cast<std::size_t>(n) + 1, 0);
      for (std::size_t i = 0; i < ids.size(); ++i) ++sizes[static_cast<std::size_t>(ids[i])];
      keep = static_cast<int>(std::max_element(sizes.begin() + 1, sizes.end()) - sizes.begin());
    }
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = ids[i] == keep ? 1 : 0;

    LabelMap lm(std::move(m), sp);
    const double measured = measure_diameter(lm);
    if (measured < accept_lo || measured > accept_hi ||
        (spec.category == SizeCategory::Small && measured >= kSmallTumorDiameterMm)) {
      continue;
    }
    return TumorMask{std::move(lm), measured, seed};
  }
  fail(ErrorCode::OrganTooSmall, "case '" + who + "': could not place a tumor of " +
                                     std::to_string(spec.lo_mm) + "-" + std::to_string(hi) +
                                     " mm after " + std::to_string(cfg.max_attempts) + " attempts");
}

}  // namespace oncosynth
