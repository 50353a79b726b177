// Development driver: runs the phantom benchmarks with knobs from argv
// (key=value) and prints timings and headline numbers.
#include <chrono>
#include <filesystem>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>

#include "oncosynth/adversarial.hpp"
#include "oncosynth/metrics.hpp"
#include "oncosynth/nn/checkpoint.hpp"
#include "oncosynth/rng.hpp"
#include "oncosynth/seg_pipeline.hpp"

using namespace oncosynth;

namespace {

std::map<std::string, std::string> args;
double num(const std::string& k, double d) { return args.count(k) ? std::stod(args[k]) : d; }

double now() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

MetricsReport evaluate(nn::UNet& m, const std::vector<TrainCase>& test) {
  std::vector<CaseEval> ev;
  for (const auto& c : test) {
    auto r = infer(m, c.image, {{32, 32, 32}, 0.5, 0.5});
    ev.push_back(evaluate_case(c.image.id, r.labels, c.tumor()));
  }
  return aggregate(std::move(ev));
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    auto eq = a.find('=');
    args[a.substr(0, eq)] = a.substr(eq + 1);
  }
  const std::string mode = args.count("mode") ? args["mode"] : "stage2";
  const auto seed = static_cast<std::uint64_t>(num("seed", 1));

  PhantomDatasetSpec spec;
  spec.labeled = static_cast<int>(num("labeled", 20));
  spec.unlabeled = static_cast<int>(num("unlabeled", 200));
  spec.test = static_cast<int>(num("test", 30));
  spec.seed = seed;
  double t0 = now();
  auto ds = make_phantom_dataset(spec);
  std::printf("dataset %.1fs\n", now() - t0);

  AdvConfig cfg;
  cfg.seed = seed;
  cfg.stage1_epochs = static_cast<int>(num("s1_epochs", 30));
  cfg.stage2_epochs = static_cast<int>(num("s2_epochs", 10));
  cfg.stage2_steps_per_epoch = static_cast<int>(num("s2_steps", 10));
  cfg.lr_synthesis = num("lr_syn", 1e-3);
  cfg.lr_segmentation = num("lr_seg", 3e-3);
  cfg.lambda_cls = num("lambda", 0.1);
  cfg.gen_net.base_channels = static_cast<int>(num("g_base", 2));
  cfg.tumor_centered_fraction = num("tcf", 0.67);
  cfg.seg_net.base_channels = static_cast<int>(num("s_base", 4));

  t0 = now();
  SegTrainResult s1;
  const std::string ck = args.count("s1_ckpt") ? args["s1_ckpt"] : "";
  if (!ck.empty() && std::filesystem::exists(ck)) {
    s1.model = nn::load_unet(ck);
  } else {
    s1 = train_stage1(ds.pool.labeled, cfg, &std::cout);
    if (!ck.empty()) nn::save_unet(ck, s1.model, {"segmenter", "calibrate"});
  }
  std::printf("stage1 %.1fs\n", now() - t0);
  auto base = evaluate(s1.model, ds.test);
  std::printf("stage1 test dice %.2f small %s large %s\n", base.dice,
              base.small.sensitivity ? std::to_string(*base.small.sensitivity).c_str() : "-",
              base.large.sensitivity ? std::to_string(*base.large.sensitivity).c_str() : "-");

  nn::UNet g0(cfg.gen_net, Rng::derive(seed, 77));
  nn::PatchClassifier c0(cfg.cls_net, Rng::derive(seed, 78));
  const int n_eval = static_cast<int>(num("n_eval", 100));
  // held-out draws: use the test volumes' organs as fresh unlabeled anatomy
  t0 = now();
  auto e0 = evaluate_generator(g0, s1.model, ds.test, n_eval, cfg, 999);
  std::printf("random G: P %.3f pass %.3f (%.1fs)\n", e0.mean_p, e0.pass_rate, now() - t0);

  t0 = now();
  auto s2 = train_stage2(g0, s1.model, c0, ds.pool, cfg, &std::cout);
  std::printf("stage2 %.1fs\n", now() - t0);
  auto e1 = evaluate_generator(s2.generator, s1.model, ds.test, n_eval, cfg, 999);
  std::printf("trained G: P %.3f pass %.3f gain %.3f\n", e1.mean_p, e1.pass_rate, e1.mean_p - e0.mean_p);
  if (mode == "stage2") return 0;

  SegTrainConfig sc;
  sc.seed = seed;
  sc.epochs = static_cast<int>(num("seg_epochs", 30));
  sc.lr = cfg.lr_segmentation;
  t0 = now();
  sc.ratio_synthetic = 0;
  auto b = train_segmentation(ds.pool, generator_fn(s2.generator), segmenter_fn(s1.model), sc);
  auto rb = evaluate(b.model, ds.test);
  std::printf("baseline %.1fs dice %.2f small %.1f (%zu/%zu) large %.1f\n", now() - t0, rb.dice,
              rb.small.sensitivity.value_or(-1), rb.small.detected, rb.small.instances,
              rb.large.sensitivity.value_or(-1));
  t0 = now();
  sc.ratio_synthetic = 1;
  VerdictLog vl;
  auto a = train_segmentation(ds.pool, generator_fn(s2.generator), segmenter_fn(s1.model), sc, nullptr, &vl);
  auto ra = evaluate(a.model, ds.test);
  std::printf("augmented %.1fs dice %.2f small %.1f (%zu/%zu) large %.1f pass %zu/%zu\n", now() - t0, ra.dice,
              ra.small.sensitivity.value_or(-1), ra.small.detected, ra.small.instances,
              ra.large.sensitivity.value_or(-1), vl.passed(), vl.count());
  return 0;
}
