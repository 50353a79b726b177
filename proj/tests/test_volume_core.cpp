#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <queue>

#include "oncosynth/crop.hpp"
#include "oncosynth/dataset.hpp"
#include "oncosynth/filters.hpp"
#include "oncosynth/morphology.hpp"
#include "oncosynth/phantom.hpp"
#include "oncosynth/volume_io.hpp"
#include "support.hpp"

using namespace oncosynth;
using namespace oncosynth::testing;

TEST(Grid, XVariesFastest) {
  Grid3<int> g({3, 4, 5});
  g(2, 1, 3) = 7;
  EXPECT_EQ(g[2 + 3 * (1 + 4 * 3)], 7);
  const auto at = g.index_of(g.offset(2, 1, 3));
  EXPECT_EQ(at, (Index3{2, 1, 3}));
}

TEST(Grid, RejectsBadShapes) {
  EXPECT_THROW(Grid3<float>(Shape3{0, 1, 1}), Error);
  EXPECT_THROW(Grid3<float>(Shape3{2, 2, 2}, std::vector<float>(7)), Error);
}

TEST(Normalize, ClampsToWindow) {
  Grid3<float> g({4, 1, 1}, std::vector<float>{-1000.f, -175.f, 37.5f, 900.f});
  const auto n = clip_and_normalize(Volume(g, {}), HuWindow::abdomen());
  EXPECT_FLOAT_EQ(n.data[0], 0.0f);
  EXPECT_FLOAT_EQ(n.data[1], 0.0f);
  EXPECT_FLOAT_EQ(n.data[2], 0.5f);
  EXPECT_FLOAT_EQ(n.data[3], 1.0f);
}

TEST(Normalize, NonFiniteNamesVoxel) {
  Grid3<float> g({2, 2, 2}, 0.0f);
  g(1, 0, 1) = std::nanf("");
  try {
    clip_and_normalize(Volume(g, {}, "case7"), HuWindow::abdomen());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteInput);
    EXPECT_NE(std::string(e.what()).find("(1,0,1)"), std::string::npos);
  }
}

TEST(Normalize, ToHuInvertsInsideWindow) {
  const auto v = random_volume({5, 5, 5}, 3);
  const auto back = clip_and_normalize(to_hu(v, HuWindow::abdomen()), HuWindow::abdomen());
  for (std::size_t i = 0; i < v.data.size(); ++i) EXPECT_NEAR(back.data[i], v.data[i], 1e-5);
}

TEST(CaseIo, RoundTripKeepsImageAndLabels) {
  TempDir dir("io");
  auto v = random_volume({6, 5, 4}, 11, {0.7, 0.8, 2.5});
  v.id = "abc";
  const auto organ = random_mask({6, 5, 4}, 0.5, 1, v.spacing);
  const auto tumor = random_mask({6, 5, 4}, 0.1, 2, v.spacing);
  save_case(dir.path() / "sub" / "abc.json", v, {{"organ", organ}, {"tumor", tumor}});
  const auto rec = load_case(dir.path() / "sub" / "abc.json");
  EXPECT_EQ(rec.image, v);
  ASSERT_EQ(rec.labels.size(), 2u);
  EXPECT_EQ(rec.labels.at("organ"), organ);
  EXPECT_EQ(rec.labels.at("tumor"), tumor);
}

TEST(CaseIo, TruncatedPayloadIsCorrupt) {
  TempDir dir("io");
  save_volume(dir.path() / "a.json", random_volume({4, 4, 4}, 1));
  std::filesystem::resize_file(dir.path() / "a.img.raw", 10);
  try {
    load_case(dir.path() / "a.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptFile);
  }
}

TEST(CaseIo, MissingFileIsIo) {
  try {
    load_case("/nonexistent/x.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(Rng, DeriveIsStableAndSpreads) {
  EXPECT_EQ(Rng::derive(1, 2), Rng::derive(1, 2));
  EXPECT_NE(Rng::derive(1, 2), Rng::derive(1, 3));
  EXPECT_NE(Rng::derive(1, 2), Rng::derive(2, 2));
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.uniform_int(-3, 9), b.uniform_int(-3, 9));
}

TEST(Filters, KernelIsNormalisedAndSymmetric) {
  const auto k = gaussian_kernel_1d(1.3, 4);
  ASSERT_EQ(k.size(), 9u);
  double s = 0;
  for (double v : k) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(k[i], k[8 - i]);
  const auto d = gaussian_kernel_1d(0.0, 2);
  EXPECT_EQ(d, (std::vector<double>{0, 0, 1, 0, 0}));
}

TEST(Filters, ReflectIndex) {
  EXPECT_EQ(reflect_index(-1, 4), 0);
  EXPECT_EQ(reflect_index(-2, 4), 1);
  EXPECT_EQ(reflect_index(4, 4), 3);
  EXPECT_EQ(reflect_index(5, 4), 2);
  EXPECT_EQ(reflect_index(2, 4), 2);
}

// Direct triple sum with reflected indices.
TEST(Filters, SeparableMatchesBruteForce) {
  const auto v = random_volume({5, 6, 4}, 9);
  const auto taps = gaussian_kernel_1d(0.9, 2);
  const auto out = separable_convolve(v.data, taps);
  const auto s = v.shape();
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        double acc = 0;
        for (int k = -2; k <= 2; ++k)
          for (int j = -2; j <= 2; ++j)
            for (int i = -2; i <= 2; ++i) {
              acc += taps[i + 2] * taps[j + 2] * taps[k + 2] *
                     v.data(reflect_index(x + i, s.nx), reflect_index(y + j, s.ny), reflect_index(z + k, s.nz));
            }
        ASSERT_NEAR(out(x, y, z), acc, 1e-5);
      }
}

TEST(Filters, AdjointIdentity) {
  const auto a = random_volume({7, 5, 6}, 1).data;
  const auto b = random_volume({7, 5, 6}, 2).data;
  const auto taps = gaussian_kernel_1d(1.5, 3);
  const auto ka = separable_convolve(a, taps);
  const auto ktb = separable_convolve_adjoint(b, taps);
  double l = 0, r = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    l += static_cast<double>(ka[i]) * b[i];
    r += static_cast<double>(a[i]) * ktb[i];
  }
  EXPECT_NEAR(l, r, 1e-4 * std::abs(l));
}

TEST(Morphology, ErodeMatchesBruteForce) {
  const auto m = random_mask({8, 7, 6}, 0.8, 4);
  const auto e = erode(m.data, 1);
  const auto s = m.shape();
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        bool all = true;
        for (int k = -1; k <= 1; ++k)
          for (int j = -1; j <= 1; ++j)
            for (int i = -1; i <= 1; ++i) {
              const int a = x + i, b = y + j, c = z + k;
              if (!m.data.contains(a, b, c) || !m.data(a, b, c)) all = false;
            }
        ASSERT_EQ(e(x, y, z) != 0, all);
      }
}

// Component count from a plain BFS flood fill.
int flood_count(const Grid3<std::uint8_t>& m) {
  const auto s = m.shape();
  Grid3<std::uint8_t> seen(s);
  int n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i] || seen[i]) continue;
    ++n;
    std::queue<Index3> q;
    q.push(m.index_of(i));
    seen[i] = 1;
    while (!q.empty()) {
      const auto p = q.front();
      q.pop();
      for (int k = -1; k <= 1; ++k)
        for (int j = -1; j <= 1; ++j)
          for (int l = -1; l <= 1; ++l) {
            const int a = p.x + l, b = p.y + j, c = p.z + k;
            if (m.contains(a, b, c) && m(a, b, c) && !seen(a, b, c)) {
              seen(a, b, c) = 1;
              q.push({a, b, c});
            }
          }
    }
  }
  return n;
}

TEST(Morphology, ComponentsMatchFloodFill) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_mask({9, 8, 7}, 0.15 + 0.01 * static_cast<double>(seed), seed);
    int n = 0;
    const auto ids = connected_components(m.data, n);
    EXPECT_EQ(n, flood_count(m.data));
    const auto parts = split_instances(m);
    ASSERT_EQ(static_cast<int>(parts.size()), n);
    std::size_t total = 0;
    for (const auto& p : parts) total += p.count_nonzero();
    EXPECT_EQ(total, m.count_nonzero());
    for (std::size_t i = 0; i < m.data.size(); ++i) EXPECT_EQ(ids[i] != 0, m.data[i] != 0);
  }
}

TEST(Morphology, DiagonalNeighboursJoin) {
  Grid3<std::uint8_t> g({3, 3, 3});
  g(0, 0, 0) = 1;
  g(1, 1, 1) = 1;
  g(2, 2, 2) = 1;
  int n = 0;
  connected_components(g, n);
  EXPECT_EQ(n, 1);
}

TEST(Phantom, DeterministicAndTumorInsideOrgan) {
  PhantomConfig cfg;
  cfg.seed = 42;
  const auto a = generate_phantom(cfg, "p");
  const auto b = generate_phantom(cfg, "p");
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.tumor, b.tumor);
  ASSERT_FALSE(a.tumor.empty());
  for (std::size_t i = 0; i < a.tumor.data.size(); ++i) {
    if (a.tumor.data[i]) ASSERT_TRUE(a.organ.data[i]);
  }
  cfg.seed = 43;
  EXPECT_NE(generate_phantom(cfg, "p").image, a.image);
}

TEST(Phantom, TumorsAreDarkerThanOrgan) {
  PhantomConfig cfg;
  cfg.seed = 5;
  const auto p = generate_phantom(cfg);
  double t = 0, o = 0;
  std::size_t nt = 0, no = 0;
  for (std::size_t i = 0; i < p.image.data.size(); ++i) {
    if (p.tumor.data[i]) {
      t += p.image.data[i];
      ++nt;
    } else if (p.organ.data[i]) {
      o += p.image.data[i];
      ++no;
    }
  }
  EXPECT_LT(t / static_cast<double>(nt), o / static_cast<double>(no) - 20.0);
}

TEST(Phantom, RejectsBadConfig) {
  PhantomConfig cfg;
  cfg.tumor_count_lo = 3;
  cfg.tumor_count_hi = 1;
  EXPECT_THROW(generate_phantom(cfg), Error);
}

TEST(Crop, TumorCenteredContainsTumor) {
  PhantomConfig cfg;
  cfg.seed = 8;
  const auto p = generate_phantom(cfg);
  const auto labels = combine_labels(p.organ, p.tumor);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto c = crop_patch(p.image, labels, {16, 16, 16}, CropPolicy::TumorCentered, s);
    EXPECT_FALSE(c.fell_back);
    EXPECT_GT(c.labels.count(kTumorClass), 0u);
    EXPECT_EQ(c.image.shape(), (Shape3{16, 16, 16}));
  }
}

TEST(Crop, FallsBackWithoutTumor) {
  PhantomConfig cfg;
  cfg.seed = 8;
  cfg.tumor_count_lo = cfg.tumor_count_hi = 0;
  const auto p = generate_phantom(cfg);
  const auto c = crop_patch(p.image, combine_labels(p.organ, p.tumor), {16, 16, 16}, CropPolicy::TumorCentered, 1);
  EXPECT_TRUE(c.fell_back);
  EXPECT_GT(c.labels.count(kOrganClass), 0u);
}

TEST(Crop, PadsOutsideSource) {
  Grid3<float> g({4, 4, 4}, 1.0f);
  const auto box = extract_box(g, {-2, 0, 0}, {4, 4, 4}, -5.0f);
  EXPECT_EQ(box(0, 0, 0), -5.0f);
  EXPECT_EQ(box(1, 3, 3), -5.0f);
  EXPECT_EQ(box(2, 0, 0), 1.0f);
}

TEST(Dataset, WriteLoadMatchesInMemory) {
  TempDir dir("ds");
  PhantomDatasetSpec spec;
  spec.labeled = 2;
  spec.unlabeled = 2;
  spec.test = 1;
  spec.seed = 7;
  write_phantom_dataset(dir.path(), spec);
  const auto mem = make_phantom_dataset(spec);
  const auto disk = load_dataset(dir.path() / "manifest.json");
  ASSERT_EQ(disk.pool.labeled.size(), 2u);
  ASSERT_EQ(disk.pool.unlabeled.size(), 2u);
  ASSERT_EQ(disk.test.size(), 1u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(disk.pool.labeled[i].labels, mem.pool.labeled[i].labels);
    for (std::size_t k = 0; k < mem.pool.labeled[i].image.data.size(); ++k) {
      ASSERT_NEAR(disk.pool.labeled[i].image.data[k], mem.pool.labeled[i].image.data[k], 1e-6);
    }
    EXPECT_FALSE(disk.pool.unlabeled[i].has_tumor());
    EXPECT_TRUE(disk.pool.unlabeled[i].has_organ());
  }
  EXPECT_NO_THROW(disk.pool.validate());
}

TEST(Dataset, OverlappingPoolsRejected) {
  PhantomDatasetSpec spec;
  spec.labeled = 1;
  spec.unlabeled = 1;
  spec.test = 0;
  auto ds = make_phantom_dataset(spec);
  ds.pool.unlabeled[0].image.id = ds.pool.labeled[0].image.id;
  EXPECT_THROW(ds.pool.validate(), Error);
}
