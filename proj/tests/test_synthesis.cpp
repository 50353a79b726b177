#include <gtest/gtest.h>

#include <cstring>

#include "oncosynth/synthesis.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace oncosynth;
using namespace oncosynth::testing;

namespace {

Grid3<float> random_field(Shape3 s, std::uint64_t seed, double scale) {
  Rng rng(seed);
  Grid3<float> g(s);
  for (auto& v : g.values()) v = static_cast<float>(scale * rng.normal());
  return g;
}

bool bit_equal(float a, float b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(Synthesis, UnmaskedVoxelsAreCopiedBitwise) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Shape3 s{6 + static_cast<int>(seed % 5), 7, 5};
    const auto x = random_volume(s, seed);
    const auto m = random_mask(s, 0.3, seed + 1000);
    const GeneratorOutput g(random_field(s, seed + 2000, 2.0));
    const auto out = apply_synthesis(x, m, g, {});
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      if (!m.data[i]) ASSERT_TRUE(bit_equal(out.data[i], x.data[i]));
    }
  }
}

TEST(Synthesis, ZeroFieldIsIdentity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Shape3 s{8, 6, 7};
    const auto x = random_volume(s, seed);
    const auto m = random_mask(s, 0.5, seed + 1);
    for (bool field : {false, true}) {
      GaussianFilterCfg cfg;
      cfg.blur_generator_field = field;
      const auto out = apply_synthesis(x, m, GeneratorOutput(Grid3<float>(s, 0.0f)), cfg);
      for (std::size_t i = 0; i < x.data.size(); ++i) ASSERT_TRUE(bit_equal(out.data[i], x.data[i]));
    }
  }
}

TEST(Synthesis, MatchesDirectFormula) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Shape3 s{9, 8, 7};
    const auto x = random_volume(s, seed);
    const auto m = random_mask(s, 0.4, seed + 7);
    const auto raw = random_field(s, seed + 9, 1.5);
    for (bool field : {false, true}) {
      GaussianFilterCfg cfg{1.2, 3, field};
      const auto out = apply_synthesis(x, m, GeneratorOutput(raw), cfg);
      const auto ref = oracle::synthesis(x, m, raw, cfg.sigma, cfg.radius, field);
      for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(out.data[i], ref[i], 2e-6);
    }
  }
}

TEST(Synthesis, OutputStaysInUnitRange) {
  const Shape3 s{8, 8, 8};
  const auto x = random_volume(s, 1);
  const auto m = random_mask(s, 1.0, 1);
  const auto out = apply_synthesis(x, m, GeneratorOutput(random_field(s, 2, 50.0)), {});
  for (float v : out.data.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Synthesis, ActivationStrictlyInsideUnitInterval) {
  Grid3<float> raw({3, 1, 1}, std::vector<float>{1e6f, -1e6f, 0.0f});
  const GeneratorOutput g(raw);
  EXPECT_LT(g.activated()[0], 1.0f);
  EXPECT_GT(g.activated()[1], -1.0f);
  EXPECT_EQ(g.activated()[2], 0.0f);
}

TEST(Synthesis, ShapeMismatchThrows) {
  const auto x = random_volume({4, 4, 4}, 1);
  const auto m = random_mask({4, 4, 5}, 0.5, 1);
  try {
    apply_synthesis(x, m, GeneratorOutput(Grid3<float>({4, 4, 4})), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Synthesis, InvalidFilterRejected) {
  const auto x = random_volume({4, 4, 4}, 1);
  const auto m = random_mask({4, 4, 4}, 0.5, 1);
  EXPECT_THROW(apply_synthesis(x, m, GeneratorOutput(Grid3<float>({4, 4, 4})), {-1.0, 3}), Error);
}

// L = sum w_i x_hat_i; analytic dL/draw vs central differences in double.
void check_gradient(bool field) {
  const Shape3 s{8, 7, 6};
  Rng rng(field ? 11 : 12);
  Grid3<float> xg(s);
  for (auto& v : xg.values()) v = static_cast<float>(rng.uniform(0.3, 0.7));
  const Volume x(xg, {});
  const auto m = random_mask(s, 0.6, 5);
  const auto raw = random_field(s, 6, 0.3);
  Grid3<float> w(s);
  for (auto& v : w.values()) v = static_cast<float>(rng.uniform(-1, 1));
  const GaussianFilterCfg cfg{1.0, 2, field};

  const auto grad = synthesis_backward(x, m, GeneratorOutput(raw), cfg, w);
  auto loss = [&](const Grid3<float>& r) {
    const auto ref = oracle::synthesis(x, m, r, cfg.sigma, cfg.radius, field);
    double l = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) l += w[i] * ref[i];
    return l;
  };
  int checked = 0;
  for (int k = 0; k < 100; ++k) {
    const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(s.count()) - 1));
    const double h = 1e-3;
    auto rp = raw, rm = raw;
    rp[i] += static_cast<float>(h);
    rm[i] -= static_cast<float>(h);
    const double hp = static_cast<double>(rp[i]) - raw[i], hm = raw[i] - static_cast<double>(rm[i]);
    const double fd = (loss(rp) - loss(rm)) / (hp + hm);
    const double an = grad[i];
    if (std::abs(fd) < 1e-6 && std::abs(an) < 1e-6) continue;
    ++checked;
    EXPECT_LE(std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)), 1e-3) << "voxel " << i;
  }
  EXPECT_GT(checked, 20);
}

TEST(SynthesisGradient, ImageFilterMatchesFiniteDifferences) { check_gradient(false); }
TEST(SynthesisGradient, FieldFilterMatchesFiniteDifferences) { check_gradient(true); }

TEST(SynthesisGradient, UnmaskedVoxelsGetNoGradient) {
  const Shape3 s{6, 6, 6};
  const auto x = random_volume(s, 1);
  const auto m = random_mask(s, 0.3, 2);
  Grid3<float> w(s, 1.0f);
  const auto g = synthesis_backward(x, m, GeneratorOutput(random_field(s, 3, 0.5)), {}, w);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!m.data[i]) EXPECT_EQ(g[i], 0.0f);
  }
}
