#include "oncosynth/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "oncosynth/filters.hpp"
#include "oncosynth/morphology.hpp"
#include "oncosynth/rng.hpp"

namespace oncosynth {

void PhantomConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidArgument, "phantom: " + what); };
  if (shape.nx < 16 || shape.ny < 16 || shape.nz < 16) bad("shape components must be >= 16");
  if (!spacing.valid()) bad("spacing must be positive");
  if (!(organ_radius_lo_mm > 0.0) || organ_radius_lo_mm > organ_radius_hi_mm) bad("organ radius range");
  if (tumor_count_lo < 0 || tumor_count_lo > tumor_count_hi) bad("tumor count range");
  if (!(tumor_diameter_lo_mm > 0.0) || tumor_diameter_lo_mm > tumor_diameter_hi_mm) bad("tumor diameter range");
  if (tumor_offset_lo_hu > tumor_offset_hi_hu) bad("tumor offset range");
  if (noise_hu < 0.0) bad("noise amplitude must be >= 0");
}

namespace {

struct Ellipsoid {
  double cx, cy, cz;  // voxel coordinates
  double rx, ry, rz;  // voxels

  double rho(int x, int y, int z) const {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry, dz = (z - cz) / rz;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  }
};

}  // namespace

PhantomCase generate_phantom(const PhantomConfig& cfg, const std::string& id) {
  cfg.validate();
  const auto s = cfg.shape;
  const auto sp = cfg.spacing;
  Rng rng(cfg.seed);

  // Organ: needs a one-voxel margin on every side.
  const double spv[3] = {sp.x, sp.y, sp.z};
  const int dims[3] = {s.nx, s.ny, s.nz};
  double radius_vox[3];
  double centre[3];
  for (int a = 0; a < 3; ++a) {
    const double max_r = dims[a] / 2.0 - 1.0;
    const double min_r = cfg.organ_radius_lo_mm / spv[a];
    if (min_r > max_r) {
      fail(ErrorCode::InfeasibleGeometry,
           "phantom: organ radius " + std::to_string(cfg.organ_radius_lo_mm) +
               " mm does not fit a grid of " + std::to_string(dims[a]) + " voxels");
    }
    radius_vox[a] = std::min(rng.uniform(cfg.organ_radius_lo_mm, cfg.organ_radius_hi_mm) / spv[a], max_r);
    const double lo = radius_vox[a], hi = dims[a] - 1.0 - radius_vox[a];
    centre[a] = rng.uniform(lo, hi);
  }
  const Ellipsoid organ_shape{centre[0], centre[1], centre[2], radius_vox[0], radius_vox[1], radius_vox[2]};

  Grid3<std::uint8_t> organ(s, 0);
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) organ(x, y, z) = organ_shape.rho(x, y, z) <= 1.0 ? 1 : 0;

  const auto background = smooth_noise(s, 6.0, rng.fork());
  const auto organ_texture = smooth_noise(s, 3.0, rng.fork());
  const auto tumor_texture = smooth_noise(s, 1.5, rng.fork());

  Grid3<float> hu(s);
  for (std::size_t i = 0; i < hu.size(); ++i) {
    hu[i] = organ[i] ? static_cast<float>(cfg.organ_hu + 8.0 * organ_texture[i])
                     : static_cast<float>(cfg.background_hu + 20.0 * background[i]);
  }

  // Tumors live strictly inside the organ and never touch each other.
  const auto host = erode(organ, 1);
  std::vector<std::size_t> host_voxels;
  for (std::size_t i = 0; i < host.size(); ++i)
    if (host[i]) host_voxels.push_back(i);

  Grid3<std::uint8_t> tumor(s, 0);
  Grid3<std::uint8_t> blocked(s, 0);
  std::vector<double> diameters;
  const int wanted = rng.uniform_int(cfg.tumor_count_lo, cfg.tumor_count_hi);
  for (int t = 0; t < wanted && !host_voxels.empty(); ++t) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const double d = rng.uniform(cfg.tumor_diameter_lo_mm, cfg.tumor_diameter_hi_mm);
      double r_mm[3] = {d / 2.0, d / 2.0 * rng.uniform(0.75, 1.0), d / 2.0 * rng.uniform(0.75, 1.0)};
      if (rng.uniform() < 0.5) std::swap(r_mm[0], r_mm[1]);
      const auto c = host.index_of(host_voxels[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(host_voxels.size()) - 1))]);
      const Ellipsoid e{c.x + rng.uniform(-0.5, 0.5), c.y + rng.uniform(-0.5, 0.5),
                        c.z + rng.uniform(-0.5, 0.5), std::max(r_mm[0] / sp.x, 0.5),
                        std::max(r_mm[1] / sp.y, 0.5), std::max(r_mm[2] / sp.z, 0.5)};
      const int x0 = static_cast<int>(std::floor(e.cx - e.rx)), x1 = static_cast<int>(std::ceil(e.cx + e.rx));
      const int y0 = static_cast<int>(std::floor(e.cy - e.ry)), y1 = static_cast<int>(std::ceil(e.cy + e.ry));
      const int z0 = static_cast<int>(std::floor(e.cz - e.rz)), z1 = static_cast<int>(std::ceil(e.cz + e.rz));

      std::vector<std::size_t> voxels;
      bool ok = true;
      for (int z = z0; z <= z1 && ok; ++z)
        for (int y = y0; y <= y1 && ok; ++y)
          for (int x = x0; x <= x1 && ok; ++x) {
            if (e.rho(x, y, z) > 1.0) continue;
            if (!host.contains(x, y, z) || !host(x, y, z) || blocked(x, y, z)) {
              ok = false;
            } else {
              voxels.push_back(host.offset(x, y, z));
            }
          }
      if (!ok || voxels.empty()) continue;

      const double offset = rng.uniform(cfg.tumor_offset_lo_hu, cfg.tumor_offset_hi_hu);
      for (auto o : voxels) {
        const auto p = tumor.index_of(o);
        const double rho = e.rho(p.x, p.y, p.z);
        const double edge = 0.4 + 0.6 * std::clamp((1.0 - rho) / 0.3, 0.0, 1.0);
        hu[o] = static_cast<float>(hu[o] + offset * edge * (1.0 + 0.25 * tumor_texture[o]));
        tumor[o] = 1;
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
              if (blocked.contains(p.x + dx, p.y + dy, p.z + dz)) blocked(p.x + dx, p.y + dy, p.z + dz) = 1;
      }
      diameters.push_back(2.0 * std::max(r_mm[0], r_mm[1]));
      break;
    }
  }

  if (cfg.noise_hu > 0.0) {
    for (auto& v : hu.values()) v = static_cast<float>(v + cfg.noise_hu * rng.normal());
  }

  PhantomCase out;
  out.image = Volume(std::move(hu), sp, id);
  out.organ = LabelMap(std::move(organ), sp);
  out.tumor = LabelMap(std::move(tumor), sp);
  out.tumor_diameters_mm = std::move(diameters);
  return out;
}

LabelMap combine_labels(const LabelMap& organ, const LabelMap& tumor) {
  require_same_shape(organ.shape(), tumor.shape(), "combine_labels");
  Grid3<std::uint8_t> g(organ.shape(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = tumor.data[i] ? kTumorClass : organ.data[i] ? kOrganClass : 0;
  }
  return LabelMap(std::move(g), organ.spacing, {0, kOrganClass, kTumorClass});
}

}  // namespace oncosynth
