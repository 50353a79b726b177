#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oncosynth/adversarial.hpp"
#include "oncosynth/losses.hpp"
#include "oncosynth/nn/optim.hpp"
#include "support.hpp"

using namespace oncosynth;
using namespace oncosynth::testing;

namespace {

double bce_ref(double z, double y) {
  const double p = 1.0 / (1.0 + std::exp(-z));
  return -(y * std::log(p) + (1 - y) * std::log(1 - p));
}

AdvConfig tiny_config() {
  AdvConfig c;
  c.seed = 3;
  c.batch = 2;
  c.stage1_epochs = 1;
  c.stage2_epochs = 2;
  c.stage2_steps_per_epoch = 2;
  c.seg_patch = {16, 16, 16};
  c.synth_patch = {32, 32, 32};
  c.cls_patch = {16, 16, 16};
  c.seg_net.base_channels = 2;
  c.cls_net.base_channels = 2;
  return c;
}

const PhantomDataset& tiny_data() {
  static const PhantomDataset ds = [] {
    PhantomDatasetSpec spec;
    spec.labeled = 3;
    spec.unlabeled = 4;
    spec.test = 2;
    spec.seed = 11;
    return make_phantom_dataset(spec);
  }();
  return ds;
}

std::uint64_t hash_of(const nn::UNet& n) { return nn::parameter_hash(n.parameters()); }

}  // namespace

TEST(LossBundle, MatchesDirectBce) {
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> z(static_cast<std::size_t>(rng.uniform_int(1, 6)));
    for (auto& v : z) v = rng.uniform(-6, 6);
    const double lseg = rng.uniform(), lambda = rng.uniform(0, 2);
    const auto b = make_loss_bundle(lseg, z, lambda);
    double want = 0;
    for (double v : z) want += bce_ref(v, 1.0);
    want /= static_cast<double>(z.size());
    ASSERT_NEAR(b.l_cls, want, 1e-9);
    ASSERT_NEAR(b.l_adv, lambda * want + lseg, 1e-9);
    ASSERT_EQ(b.l_seg, lseg);
  }
}

TEST(LossBundle, LambdaZeroIsSegLossOnly) {
  const std::vector<double> z{3.0, -2.0};
  EXPECT_DOUBLE_EQ(make_loss_bundle(0.25, z, 0.0).l_adv, 0.25);
}

TEST(ClassifierLoss, MeanBceOverBothSides) {
  const std::vector<double> real{2.0, -1.0}, fake{0.5};
  const double want = (bce_ref(2.0, 1) + bce_ref(-1.0, 1) + bce_ref(0.5, 0)) / 3.0;
  ASSERT_TRUE(classifier_loss(real, fake).has_value());
  EXPECT_NEAR(*classifier_loss(real, fake), want, 1e-12);
  EXPECT_FALSE(classifier_loss({}, fake).has_value());
  EXPECT_FALSE(classifier_loss(real, {}).has_value());
}

TEST(AdvConfig, Validation) {
  EXPECT_NO_THROW(AdvConfig{}.validate());
  auto c = AdvConfig{};
  c.lambda_cls = -1;
  EXPECT_THROW(c.validate(), Error);
  c = AdvConfig{};
  c.seg_patch = {30, 32, 32};
  EXPECT_THROW(c.validate(), Error);
  c = AdvConfig{};
  c.threshold = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(MaskCenteredOrigin, CentresTheBox) {
  const auto m = box_mask({40, 40, 40}, {10, 12, 14}, {14, 16, 18});
  const auto o = mask_centered_origin(m, {8, 8, 8});
  // centroids 11.5, 13.5, 15.5 round half away from zero
  EXPECT_EQ(o.x, 8);
  EXPECT_EQ(o.y, 10);
  EXPECT_EQ(o.z, 12);
  EXPECT_THROW(mask_centered_origin(LabelMap(Grid3<std::uint8_t>({4, 4, 4}), {}), {2, 2, 2}), Error);
}

TEST(Stage1, NoTumorVoxelsIsEmptyMask) {
  auto labeled = tiny_data().pool.unlabeled;  // organ labels only
  try {
    train_stage1(labeled, tiny_config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyMask);
  }
}

TEST(DrawSynthesisPatch, DeterministicAndInsideOrgan) {
  const auto cfg = tiny_config();
  const auto a = draw_synthesis_patch(tiny_data().pool.unlabeled, cfg, 42);
  const auto b = draw_synthesis_patch(tiny_data().pool.unlabeled, cfg, 42);
  EXPECT_EQ(a.image.id, b.image.id);
  EXPECT_EQ(a.mask.mask, b.mask.mask);
  EXPECT_EQ(a.image.shape(), cfg.synth_patch);
  for (std::size_t i = 0; i < a.mask.mask.data.size(); ++i) {
    if (a.mask.mask.data[i]) {
      ASSERT_TRUE(a.organ.data[i]);
    }
  }
  EXPECT_THROW(draw_synthesis_patch({}, cfg, 1), Error);
}

TEST(Stage2, FreezesSegmenterAndIsDeterministic) {
  const auto cfg = tiny_config();
  const auto& ds = tiny_data();
  const nn::UNet s(cfg.seg_net, 5);
  const nn::UNet g(cfg.gen_net, 6);
  const nn::PatchClassifier c(cfg.cls_net, 7);
  const auto s_hash = hash_of(s);

  std::ostringstream log1, log2;
  const auto r1 = train_stage2(g, s, c, ds.pool, cfg, &log1);
  const auto r2 = train_stage2(g, s, c, ds.pool, cfg, &log2);
  EXPECT_EQ(r1.seg_hash_before, s_hash);
  EXPECT_EQ(r1.seg_hash_after, s_hash);
  EXPECT_EQ(hash_of(s), s_hash);
  EXPECT_EQ(hash_of(r1.generator), hash_of(r2.generator));
  EXPECT_NE(hash_of(r1.generator), hash_of(g));
  EXPECT_EQ(log1.str(), log2.str());
  EXPECT_EQ(r1.epochs.size(), 2u);
  EXPECT_EQ(r1.steps.size(), 4u);
  for (const auto& st : r1.steps) {
    EXPECT_TRUE(st.l_disc.has_value());
    EXPECT_NEAR(st.l_adv, cfg.lambda_cls * st.l_cls + st.l_seg, 1e-12);
    EXPECT_GE(st.mean_p, 0.0);
    EXPECT_LE(st.mean_p, 1.0);
  }
}

TEST(Stage2, SkipsClassifierWithoutRealTumors) {
  auto cfg = tiny_config();
  cfg.stage2_epochs = 1;
  cfg.stage2_steps_per_epoch = 1;
  DatasetPool pool = tiny_data().pool;
  for (auto& t : pool.labeled) t.labels = t.labels.select(kOrganClass);
  const auto r = train_stage2(nn::UNet(cfg.gen_net, 1), nn::UNet(cfg.seg_net, 2), nn::PatchClassifier(cfg.cls_net, 3),
                              pool, cfg);
  EXPECT_EQ(r.epochs[0].classifier_steps_skipped, 1);
  EXPECT_FALSE(r.epochs[0].l_disc.has_value());
}

TEST(Stage2, EmptyUnlabeledPoolRejected) {
  auto pool = tiny_data().pool;
  pool.unlabeled.clear();
  const auto cfg = tiny_config();
  EXPECT_THROW(train_stage2(nn::UNet(cfg.gen_net, 1), nn::UNet(cfg.seg_net, 2), nn::PatchClassifier(cfg.cls_net, 3),
                            pool, cfg),
               Error);
}

TEST(EvaluateGenerator, SameDrawsForDifferentGenerators) {
  const auto cfg = tiny_config();
  const nn::UNet s(cfg.seg_net, 1);
  const auto a = evaluate_generator(nn::UNet(cfg.gen_net, 1), s, tiny_data().test, 4, cfg, 9);
  const auto b = evaluate_generator(nn::UNet(cfg.gen_net, 2), s, tiny_data().test, 4, cfg, 9);
  ASSERT_EQ(a.verdicts.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.verdicts[i].case_id, b.verdicts[i].case_id);
    EXPECT_EQ(a.verdicts[i].mask_voxels, b.verdicts[i].mask_voxels);
  }
}
