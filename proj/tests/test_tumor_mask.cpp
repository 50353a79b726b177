#include <gtest/gtest.h>

#include <cmath>

#include "oncosynth/morphology.hpp"
#include "oncosynth/phantom.hpp"
#include "oncosynth/tumor_mask.hpp"
#include "support.hpp"

using namespace oncosynth;
using namespace oncosynth::testing;

namespace {

LabelMap ellipsoid_organ(Shape3 s, double rx, double ry, double rz, Spacing sp = {2, 2, 2}) {
  Grid3<std::uint8_t> g(s);
  const double cx = (s.nx - 1) / 2.0, cy = (s.ny - 1) / 2.0, cz = (s.nz - 1) / 2.0;
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        const double a = (x - cx) / rx, b = (y - cy) / ry, c = (z - cz) / rz;
        g(x, y, z) = a * a + b * b + c * c <= 1.0 ? 1 : 0;
      }
  return LabelMap(std::move(g), sp);
}

// All voxel pairs in each slice, centre distance, plus one voxel width.
double brute_diameter(const LabelMap& m) {
  const auto s = m.shape();
  double best = -1;
  for (int z = 0; z < s.nz; ++z) {
    std::vector<std::pair<int, int>> on;
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x)
        if (m.data(x, y, z)) on.emplace_back(x, y);
    for (std::size_t i = 0; i < on.size(); ++i) {
      best = std::max(best, 0.0);
      for (std::size_t j = 0; j < on.size(); ++j) {
        const double dx = (on[i].first - on[j].first) * m.spacing.x;
        const double dy = (on[i].second - on[j].second) * m.spacing.y;
        best = std::max(best, std::sqrt(dx * dx + dy * dy));
      }
    }
  }
  return best + 0.5 * (m.spacing.x + m.spacing.y);
}

}  // namespace

TEST(MeasureDiameter, MatchesAllPairs) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto m = random_mask({9, 8, 3}, 0.05 + 0.02 * static_cast<double>(seed % 10), seed, {0.8, 1.3, 2.0});
    if (m.empty()) continue;
    EXPECT_NEAR(measure_diameter(m), brute_diameter(m), 1e-9) << "seed " << seed;
  }
}

TEST(MeasureDiameter, SingleVoxelIsOneVoxelWide) {
  Grid3<std::uint8_t> g({3, 3, 3});
  g(1, 1, 1) = 1;
  EXPECT_DOUBLE_EQ(measure_diameter(LabelMap(g, {2, 2, 2})), 2.0);
}

TEST(MeasureDiameter, EmptyThrows) {
  EXPECT_THROW(measure_diameter(LabelMap(Grid3<std::uint8_t>({2, 2, 2}), {})), Error);
}

TEST(SampleMask, InsideErodedOrganSingleComponentInRange) {
  const auto organ = ellipsoid_organ({40, 40, 40}, 16, 14, 12);
  const Grid3<std::uint8_t> eroded = erode(organ.data, 1);
  const SizeSpec spec{6.0, 24.0, SizeCategory::Any};
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto t = sample_tumor_mask(organ, spec, seed);
    ASSERT_GT(t.voxel_count(), 0u);
    for (std::size_t i = 0; i < eroded.size(); ++i) {
      if (t.mask.data[i]) ASSERT_TRUE(eroded[i]) << "seed " << seed;
    }
    EXPECT_EQ(split_instances(t.mask).size(), 1u);
    const double d = measure_diameter(t.mask);
    EXPECT_NEAR(d, t.diameter_mm, 1e-9);
    EXPECT_GE(d, spec.lo_mm - 2.0);
    EXPECT_LE(d, spec.hi_mm + 2.0);
  }
}

TEST(SampleMask, SmallCategoryStaysBelowThreshold) {
  const auto organ = ellipsoid_organ({40, 40, 40}, 16, 14, 12);
  const SizeSpec spec{5.0, 30.0, SizeCategory::Small};
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    EXPECT_LT(sample_tumor_mask(organ, spec, seed).diameter_mm, kSmallTumorDiameterMm);
  }
}

TEST(SampleMask, PureFunctionOfSeed) {
  const auto organ = ellipsoid_organ({32, 32, 32}, 12, 12, 10);
  const auto a = sample_tumor_mask(organ, {}, 99);
  const auto b = sample_tumor_mask(organ, {}, 99);
  EXPECT_EQ(a.mask, b.mask);
  bool any_diff = false;
  for (std::uint64_t s = 100; s < 105; ++s) any_diff |= !(sample_tumor_mask(organ, {}, s).mask == a.mask);
  EXPECT_TRUE(any_diff);
}

TEST(SampleMask, TinyOrganIsTooSmall) {
  const auto organ = ellipsoid_organ({16, 16, 16}, 2, 2, 2);
  try {
    sample_tumor_mask(organ, {}, 1, {}, "tiny");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OrganTooSmall);
    EXPECT_NE(std::string(e.what()).find("tiny"), std::string::npos);
  }
}

TEST(SampleMask, InvalidSpec) {
  const auto organ = ellipsoid_organ({32, 32, 32}, 12, 12, 10);
  EXPECT_THROW(sample_tumor_mask(organ, {10.0, 5.0}, 1), Error);
  EXPECT_THROW(sample_tumor_mask(organ, {25.0, 30.0, SizeCategory::Small}, 1), Error);
}

TEST(SampleMask, WorksOnPhantomOrgans) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    PhantomConfig cfg;
    cfg.seed = seed;
    const auto p = generate_phantom(cfg);
    EXPECT_NO_THROW(sample_tumor_mask(p.organ, {}, seed));
  }
}
