// oncosynth: command-line entry point. Exit codes: 0 ok, 1 runtime failure,
// 2 usage or configuration error.
#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oncosynth/config.hpp"
#include "oncosynth/metrics.hpp"
#include "oncosynth/morphology.hpp"
#include "oncosynth/nn/checkpoint.hpp"
#include "oncosynth/seg_pipeline.hpp"
#include "oncosynth/turing_server.hpp"
#include "oncosynth/volume_io.hpp"

namespace fs = std::filesystem;
using namespace oncosynth;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

HuWindow window_of(const RunConfig& c) { return c.str("data.window") == "chest" ? HuWindow::chest() : HuWindow::abdomen(); }

fs::path need_path(const RunConfig& c, const std::string& key) {
  const auto p = c.str(key);
  if (p.empty()) throw ConfigError("missing required path " + key + " (see --help)");
  return p;
}

fs::path need_existing(const RunConfig& c, const std::string& key) {
  auto p = need_path(c, key);
  if (!fs::exists(p)) fail(ErrorCode::Io, key + ": '" + p.string() + "' does not exist");
  return p;
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot write " + p.string());
  os << s;
}

std::ofstream open_log(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot write " + p.string());
  return os;
}

void finish(const std::string& command, const RunConfig& cfg, const fs::path& out,
            std::map<std::string, std::string> outputs) {
  write_manifest(out, {command, version_string(), cfg, std::move(outputs)});
}

MetricsReport evaluate_model(nn::UNet& m, const std::vector<TrainCase>& cases, const InferConfig& ic) {
  std::vector<CaseEval> ev;
  for (const auto& c : cases) ev.push_back(evaluate_case(c.image.id, infer(m, c.image, ic).labels, c.tumor()));
  return aggregate(std::move(ev));
}

// --- commands -------------------------------------------------------------

int cmd_phantom_gen(const RunConfig& cfg) {
  const auto out = need_path(cfg, "paths.out");
  const auto spec = cfg.phantom();
  write_phantom_dataset(out, spec, window_of(cfg));
  finish("phantom-gen", cfg, out, {{"dataset", (out / "manifest.json").string()}});
  std::cout << "wrote " << spec.labeled + spec.unlabeled + spec.test << " cases to " << out << "\n";
  return 0;
}

int cmd_train_stage1(const RunConfig& cfg) {
  const auto data = need_existing(cfg, "paths.data");
  const auto out = need_path(cfg, "paths.out");
  const auto adv = cfg.adv();
  const auto ds = load_dataset(data);
  auto log = open_log(out / "stage1_log.jsonl");
  auto r = train_stage1(ds.pool.labeled, adv, &log);
  nn::save_unet(out / "segmenter.ckpt", r.model, {"segmenter", cfg.hash()});
  const auto rep = evaluate_model(r.model, ds.test, cfg.infer());
  write_text(out / "stage1_eval.json", to_json(rep).dump(2) + "\n");
  finish("train-stage1", cfg, out,
         {{"segmenter", (out / "segmenter.ckpt").string()}, {"log", (out / "stage1_log.jsonl").string()},
          {"eval", (out / "stage1_eval.json").string()}});
  std::cout << "stage1 test dice " << rep.dice << "\n";
  return 0;
}

int cmd_train_stage2(const RunConfig& cfg) {
  const auto data = need_existing(cfg, "paths.data");
  const auto seg = need_existing(cfg, "paths.segmenter");
  const auto out = need_path(cfg, "paths.out");
  const auto adv = cfg.adv();
  const auto ds = load_dataset(data);
  const auto s = nn::load_unet(seg);
  const nn::UNet g0(adv.gen_net, Rng::derive(adv.seed, 77));
  const nn::PatchClassifier c0(adv.cls_net, Rng::derive(adv.seed, 78));
  auto log = open_log(out / "stage2_log.jsonl");
  auto r = train_stage2(g0, s, c0, ds.pool, adv, &log);
  nn::save_unet(out / "generator.ckpt", r.generator, {"generator", cfg.hash()});
  nn::save_classifier(out / "classifier.ckpt", r.classifier, {"classifier", cfg.hash()});

  // Held-out anatomy: test volumes' organs, identical draws for both generators.
  const auto& held = ds.test.empty() ? ds.pool.unlabeled : ds.test;
  const int n = 100;
  const auto before = evaluate_generator(g0, s, held, n, adv, Rng::derive(adv.seed, 99));
  const auto after = evaluate_generator(r.generator, s, held, n, adv, Rng::derive(adv.seed, 99));
  const json ev = {{"draws", n},
                   {"random_generator", {{"mean_p", before.mean_p}, {"pass_rate", before.pass_rate}}},
                   {"trained_generator", {{"mean_p", after.mean_p}, {"pass_rate", after.pass_rate}}},
                   {"gain", after.mean_p - before.mean_p}};
  write_text(out / "stage2_eval.json", ev.dump(2) + "\n");
  finish("train-stage2", cfg, out,
         {{"generator", (out / "generator.ckpt").string()}, {"classifier", (out / "classifier.ckpt").string()},
          {"log", (out / "stage2_log.jsonl").string()}, {"eval", (out / "stage2_eval.json").string()}});
  std::cout << "mean P random " << before.mean_p << " trained " << after.mean_p << "\n";
  return 0;
}

std::array<int, 3> centroid_or_middle(const LabelMap& m) {
  if (m.empty()) return {m.shape().nx / 2, m.shape().ny / 2, m.shape().nz / 2};
  return turing::label_centroid(m);
}

// Largest 26-connected tumor instance, for single-tumor Turing cases.
LabelMap largest_instance(const LabelMap& m) {
  auto parts = split_instances(m);
  std::size_t best = 0;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i].count_nonzero() > parts[best].count_nonzero()) best = i;
  }
  return parts.at(best);
}

int cmd_synthesize(const RunConfig& cfg) {
  const auto data = need_existing(cfg, "paths.data");
  const auto gen = need_existing(cfg, "paths.generator");
  const auto seg = need_existing(cfg, "paths.segmenter");
  const auto out = need_path(cfg, "paths.out");
  const int count = cfg.integer("synth.count");
  if (count < 1) throw ConfigError("config synth.count: must be >= 1");
  auto sc = cfg.stream();
  sc.seed = cfg.require_seed();
  const auto ds = load_dataset(data);
  const auto window = ds.window;

  auto vlog = open_log(out / "verdicts.jsonl");
  auto skips = open_log(out / "skipped.jsonl");
  VerdictLog verdicts(&vlog);
  SynthStream stream(ds.pool.unlabeled, generator_fn(nn::load_unet(gen)), segmenter_fn(nn::load_unet(seg)), sc,
                     &verdicts, &skips);

  // Phantoms carry no anatomy type; types are assigned round-robin.
  const auto& types = turing::kTumorTypes;
  turing::TuringPool pool{out / "turing_pool", {}};
  int n_synth = 0;
  for (int i = 0; i < count; ++i) {
    auto item = stream.next();
    if (!item.verdict.passed) continue;
    const std::string id = "synthetic-" + std::to_string(10000 + n_synth).substr(1);
    save_case(pool.dir / (id + ".json"), to_hu(item.image, window), {{"organ", item.organ}, {"tumor", item.tumor}});
    pool.entries.push_back({id, id + ".json", turing::Truth::Synthetic, std::string(types[static_cast<std::size_t>(n_synth) % types.size()])});
    if (cfg.flag("synth.preview")) {
      write_text(out / "previews" / (id + ".png"),
                 turing::render_slice_png(to_hu(item.image, window), turing::SliceAxis::Axial,
                                          centroid_or_middle(item.tumor), window));
    }
    ++n_synth;
  }
  int n_real = 0;
  for (const auto* group : {&ds.pool.labeled, &ds.test}) {
    for (const auto& c : *group) {
      if (!c.has_tumor()) continue;
      const std::string id = "real-" + std::to_string(10000 + n_real).substr(1);
      save_case(pool.dir / (id + ".json"), to_hu(c.image, window),
                {{"organ", c.labels.select(kOrganClass)}, {"tumor", largest_instance(c.tumor())}});
      pool.entries.push_back({id, id + ".json", turing::Truth::Real, std::string(types[static_cast<std::size_t>(n_real) % types.size()])});
      ++n_real;
    }
  }
  save_pool(pool);
  finish("synthesize", cfg, out,
         {{"verdicts", (out / "verdicts.jsonl").string()}, {"turing_pool", pool.dir.string()}});
  std::cout << "draws " << verdicts.count() << " passed " << verdicts.passed() << "; pool " << n_real << " real, "
            << n_synth << " synthetic\n";
  return 0;
}

int cmd_train_seg(const RunConfig& cfg) {
  const auto data = need_existing(cfg, "paths.data");
  const auto out = need_path(cfg, "paths.out");
  auto sc = cfg.seg();
  sc.seed = cfg.require_seed();
  const auto ds = load_dataset(data);
  const bool augmented = !cfg.str("paths.generator").empty();
  FieldFn g;
  ProbFn s;
  DatasetPool pool = ds.pool;
  if (augmented) {
    g = generator_fn(nn::load_unet(need_existing(cfg, "paths.generator")));
    s = segmenter_fn(nn::load_unet(need_existing(cfg, "paths.segmenter")));
  } else {
    pool.unlabeled.clear();  // labeled-only baseline
  }
  auto log = open_log(out / "seg_log.jsonl");
  auto vlog = open_log(out / "verdicts.jsonl");
  VerdictLog verdicts(&vlog);
  auto r = train_segmentation(pool, g, s, sc, &log, &verdicts);
  nn::save_unet(out / "model.ckpt", r.model, {"segmenter", cfg.hash()});
  finish("train-seg", cfg, out, {{"model", (out / "model.ckpt").string()}, {"log", (out / "seg_log.jsonl").string()}});
  std::cout << (augmented ? "augmented" : "labeled-only") << " training done; synthetic draws " << verdicts.count()
            << " passed " << verdicts.passed() << "\n";
  return 0;
}

int cmd_infer(const RunConfig& cfg) {
  const auto model_path = need_existing(cfg, "paths.model");
  const auto input = need_existing(cfg, "paths.input");
  const auto out = need_path(cfg, "paths.out");
  const auto ic = cfg.infer();
  auto model = nn::load_unet(model_path);
  std::vector<std::string> written;
  auto run = [&](const Volume& normalised, const Volume& hu, const std::string& id) {
    auto r = infer(model, normalised, ic);
    save_case(out / (id + ".json"), hu, {{"tumor", r.labels}});
    written.push_back(id);
  };
  std::ifstream probe(input);
  const auto j = json::parse(probe, nullptr, false);
  if (!j.is_discarded() && j.value("format", "") == "oncosynth-dataset") {
    const auto ds = load_dataset(input);
    for (const auto& c : ds.test) run(c.image, to_hu(c.image, ds.window), c.image.id);
  } else {
    auto rec = load_case(input);
    const auto id = input.stem().string();
    run(clip_and_normalize(rec.image, window_of(cfg)), rec.image, id);
  }
  finish("infer", cfg, out, {{"predictions", out.string()}});
  std::cout << "wrote " << written.size() << " predictions to " << out << "\n";
  return 0;
}

LabelMap tumor_or_empty(const CaseRecord& rec) {
  auto it = rec.labels.find("tumor");
  if (it != rec.labels.end()) return it->second.select(1);
  return LabelMap(Grid3<std::uint8_t>(rec.image.shape()), rec.image.spacing);
}

int cmd_eval(const RunConfig& cfg) {
  const auto pred = need_existing(cfg, "paths.pred");
  const auto gt = need_existing(cfg, "paths.gt");
  const auto out = need_path(cfg, "paths.out");
  std::vector<fs::path> sidecars;
  for (const auto& e : fs::directory_iterator(pred)) {
    const auto name = e.path().filename().string();
    if (e.path().extension() == ".json" && name != "manifest.json" && name != "run_manifest.json") {
      sidecars.push_back(e.path());
    }
  }
  std::sort(sidecars.begin(), sidecars.end());
  if (sidecars.empty()) fail(ErrorCode::Io, "no prediction sidecars in " + pred.string());
  std::vector<CaseEval> ev;
  for (const auto& p : sidecars) {
    const auto g = gt / p.filename();
    if (!fs::exists(g)) fail(ErrorCode::Io, "no ground truth for " + p.filename().string() + " in " + gt.string());
    const auto pr = load_case(p);
    const auto gr = load_case(g);
    ev.push_back(evaluate_case(p.stem().string(), tumor_or_empty(pr), tumor_or_empty(gr)));
  }
  const auto rep = aggregate(std::move(ev));
  write_text(out / "report.json", to_json(rep).dump(2) + "\n");
  write_text(out / "report.csv", to_csv(rep));
  finish("eval", cfg, out, {{"report_json", (out / "report.json").string()}, {"report_csv", (out / "report.csv").string()}});
  std::cout << "cases " << rep.cases.size() << " mean dice " << rep.dice << "\n";
  return 0;
}

std::vector<turing::TuringCase> case_set(const RunConfig& cfg, const fs::path& pool_dir, const fs::path& sessions) {
  const auto file = sessions / "case_set.json";
  if (fs::exists(file)) return turing::load_case_set(file);
  const auto pool = turing::load_pool(pool_dir);
  std::vector<turing::PoolEntry> real, synth;
  for (const auto& e : pool.entries) (e.truth == turing::Truth::Real ? real : synth).push_back(e);
  const std::uint64_t seed = cfg.is_set("seed") ? cfg.get("seed").get<std::uint64_t>() : 0;
  auto cases = turing::build_case_set(real, synth, cfg.turing_design(), seed);
  turing::save_case_set(file, cases);
  return cases;
}

fs::path sessions_dir(const RunConfig& cfg, const fs::path& cases) {
  const auto o = cfg.str("paths.out");
  return o.empty() ? cases / "sessions" : fs::path(o);
}

std::function<void()> g_stop;

int cmd_turing_serve(const RunConfig& cfg) {
  const auto cases_dir = need_existing(cfg, "paths.cases");
  const auto sdir = sessions_dir(cfg, cases_dir);
  auto cases = case_set(cfg, cases_dir, sdir);
  const std::uint64_t seed = cfg.is_set("seed") ? cfg.get("seed").get<std::uint64_t>() : 0;
  turing::SessionStore store(sdir, std::move(cases), seed);
  turing::TuringServer server(store, cases_dir, window_of(cfg), cfg.str("paths.static"));
  const int port = server.bind(cfg.str("turing.host"), cfg.integer("turing.port"));
  finish("turing-serve", cfg, sdir, {{"sessions", sdir.string()}});
  std::cout << "listening on http://" << cfg.str("turing.host") << ":" << port << std::endl;
  g_stop = [&server] { server.stop(); };
  std::signal(SIGINT, [](int) { if (g_stop) g_stop(); });
  std::signal(SIGTERM, [](int) { if (g_stop) g_stop(); });
  server.listen();
  return 0;
}

int cmd_turing_report(const RunConfig& cfg, const std::string& format, const std::string& grouping) {
  const auto cases_dir = need_existing(cfg, "paths.cases");
  const auto sdir = sessions_dir(cfg, cases_dir);
  if (!fs::exists(sdir / "case_set.json")) fail(ErrorCode::Io, "no case set in " + sdir.string());
  turing::SessionStore store(sdir, turing::load_case_set(sdir / "case_set.json"), 0);
  const auto g = turing::grouping_from_string(grouping);
  const auto r = turing::report(store.sessions(), store.cases(), g);
  if (format == "csv") {
    std::cout << turing::to_csv(r, g);
  } else {
    std::cout << turing::to_json(r, g).dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oncosynth: tumor synthesis, segmentation training and reader-study tools"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  app.set_version_flag("--version", version_string());

  std::string config_file;
  std::vector<std::string> overrides;
  std::map<std::string, std::string> path_flags;
  std::string seed_flag;
  app.add_option("--config", config_file, "JSON config or a run_manifest.json to replay")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "key=value override (repeatable)");
  app.add_option("--seed", seed_flag, "shorthand for --set seed=N");

  auto path_opt = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option(flag, path_flags[key], help);
  };

  auto* gen = app.add_subcommand("phantom-gen", "write a procedural phantom dataset");
  path_opt(gen, "--out", "paths.out", "output directory");

  auto* s1 = app.add_subcommand("train-stage1", "train the segmentation discriminator");
  path_opt(s1, "--data", "paths.data", "dataset manifest.json");
  path_opt(s1, "--out", "paths.out", "output directory");

  auto* s2 = app.add_subcommand("train-stage2", "adversarial training of the generator");
  path_opt(s2, "--data", "paths.data", "dataset manifest.json");
  path_opt(s2, "--segmenter", "paths.segmenter", "stage-1 checkpoint");
  path_opt(s2, "--out", "paths.out", "output directory");

  auto* syn = app.add_subcommand("synthesize", "gated synthesis over the unlabeled pool; exports a Turing pool");
  path_opt(syn, "--data", "paths.data", "dataset manifest.json");
  path_opt(syn, "--generator", "paths.generator", "generator checkpoint");
  path_opt(syn, "--segmenter", "paths.segmenter", "stage-1 checkpoint");
  path_opt(syn, "--out", "paths.out", "output directory");

  auto* seg = app.add_subcommand("train-seg", "downstream segmentation training (augmented when --generator is set)");
  path_opt(seg, "--data", "paths.data", "dataset manifest.json");
  path_opt(seg, "--generator", "paths.generator", "generator checkpoint (omit for labeled-only)");
  path_opt(seg, "--segmenter", "paths.segmenter", "stage-1 checkpoint for the quality gate");
  path_opt(seg, "--out", "paths.out", "output directory");

  auto* inf = app.add_subcommand("infer", "sliding-window inference");
  path_opt(inf, "--model", "paths.model", "segmenter checkpoint");
  path_opt(inf, "--input", "paths.input", "case sidecar (HU) or dataset manifest (test split)");
  path_opt(inf, "--out", "paths.out", "prediction directory");

  auto* ev = app.add_subcommand("eval", "metrics for prediction vs ground-truth sidecars");
  path_opt(ev, "--pred", "paths.pred", "prediction directory");
  path_opt(ev, "--gt", "paths.gt", "ground-truth directory");
  path_opt(ev, "--out", "paths.out", "report directory");

  auto* serve = app.add_subcommand("turing-serve", "serve the reader-study HTTP API");
  path_opt(serve, "--cases", "paths.cases", "Turing pool directory");
  path_opt(serve, "--sessions", "paths.out", "session directory (default <cases>/sessions)");
  path_opt(serve, "--static", "paths.static", "static UI bundle to mount at /");
  std::string port_flag;
  serve->add_option("--port", port_flag, "TCP port (0 picks a free one)");

  auto* rep = app.add_subcommand("turing-report", "reader-performance report");
  path_opt(rep, "--cases", "paths.cases", "Turing pool directory");
  path_opt(rep, "--sessions", "paths.out", "session directory (default <cases>/sessions)");
  std::string format = "json", grouping = "total";
  rep->add_option("--out", format, "output format")->check(CLI::IsMember({"json", "csv"}));
  rep->add_option("--grouping", grouping, "total, level or type")->check(CLI::IsMember({"total", "level", "type"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  // Precedence: defaults < config file < environment < --set < flags.
  RunConfig cfg;
  try {
    if (!config_file.empty()) cfg.merge_file(config_file);
    cfg.apply_env(process_env());
    for (const auto& o : overrides) cfg.apply_override(o);
    if (!seed_flag.empty()) cfg.set("seed", seed_flag);
    if (!port_flag.empty()) cfg.set("turing.port", port_flag);
    for (const auto& [k, v] : path_flags) {
      if (!v.empty()) cfg.set(k, v);
    }
    static const std::set<std::string> seeded = {"phantom-gen", "train-stage1", "train-stage2", "synthesize",
                                                 "train-seg"};
    if (seeded.count(command)) cfg.require_seed();
    (void)cfg.adv();
    (void)cfg.seg();
    (void)cfg.infer();
    (void)cfg.turing_design();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigKey) {
      std::cerr << "unknown config key: " << e.what() << "\n";
    } else {
      std::cerr << e.what() << "\n";
    }
    return 2;
  }

  try {
    if (command == "phantom-gen") return cmd_phantom_gen(cfg);
    if (command == "train-stage1") return cmd_train_stage1(cfg);
    if (command == "train-stage2") return cmd_train_stage2(cfg);
    if (command == "synthesize") return cmd_synthesize(cfg);
    if (command == "train-seg") return cmd_train_seg(cfg);
    if (command == "infer") return cmd_infer(cfg);
    if (command == "eval") return cmd_eval(cfg);
    if (command == "turing-serve") return cmd_turing_serve(cfg);
    if (command == "turing-report") return cmd_turing_report(cfg, format, grouping);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigKey ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
