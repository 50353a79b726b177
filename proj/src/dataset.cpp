#include "oncosynth/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "oncosynth/rng.hpp"
#include "oncosynth/volume_io.hpp"

namespace oncosynth {

namespace fs = std::filesystem;
using nlohmann::json;

void DatasetPool::validate() const {
  std::set<std::string> ids;
  for (const auto& c : labeled) ids.insert(c.image.id);
  for (const auto& c : unlabeled) {
    if (ids.count(c.image.id)) fail(ErrorCode::InvalidArgument, "case '" + c.image.id + "' is in both pools");
    if (!c.has_organ()) fail(ErrorCode::InvalidArgument, "unlabeled case '" + c.image.id + "' has no organ label");
  }
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Labeled: return "labeled";
    case Split::Unlabeled: return "unlabeled";
    case Split::Test: return "test";
  }
  return "labeled";
}

Split split_from_string(std::string_view s) {
  if (s == "labeled") return Split::Labeled;
  if (s == "unlabeled") return Split::Unlabeled;
  if (s == "test") return Split::Test;
  fail(ErrorCode::CorruptFile, "unknown split '" + std::string(s) + "'");
}

namespace {

struct Planned {
  Split split;
  std::string id;
  PhantomConfig cfg;
};

std::vector<Planned> plan(const PhantomDatasetSpec& spec) {
  std::vector<Planned> out;
  auto add = [&](Split split, int n, const PhantomConfig& base, std::uint64_t stream) {
    for (int i = 0; i < n; ++i) {
      PhantomConfig c = base;
      c.seed = Rng::derive(spec.seed, stream * 1000003ULL + static_cast<std::uint64_t>(i));
      char id[32];
      std::snprintf(id, sizeof id, "%s-%04d", std::string(to_string(split)).c_str(), i);
      out.push_back({split, id, c});
    }
  };
  add(Split::Labeled, spec.labeled, spec.tumor_cases, 1);
  add(Split::Unlabeled, spec.unlabeled, spec.healthy_cases, 2);
  add(Split::Test, spec.test, spec.tumor_cases, 3);
  return out;
}

TrainCase to_train_case(const Volume& hu, const LabelMap& organ, const LabelMap* tumor, HuWindow w) {
  LabelMap labels = tumor ? combine_labels(organ, *tumor)
                          : LabelMap(organ.data, organ.spacing, {0, kOrganClass});
  return {clip_and_normalize(hu, w), std::move(labels)};
}

void place(PhantomDataset& ds, Split split, TrainCase c) {
  switch (split) {
    case Split::Labeled: ds.pool.labeled.push_back(std::move(c)); break;
    case Split::Unlabeled: ds.pool.unlabeled.push_back(std::move(c)); break;
    case Split::Test: ds.test.push_back(std::move(c)); break;
  }
}

}  // namespace

PhantomDataset make_phantom_dataset(const PhantomDatasetSpec& spec, HuWindow window) {
  PhantomDataset ds;
  for (const auto& p : plan(spec)) {
    const auto ph = generate_phantom(p.cfg, p.id);
    const bool labeled = p.split != Split::Unlabeled;
    place(ds, p.split, to_train_case(ph.image, ph.organ, labeled ? &ph.tumor : nullptr, window));
  }
  ds.pool.validate();
  return ds;
}

void write_phantom_dataset(const fs::path& dir, const PhantomDatasetSpec& spec, HuWindow window) {
  fs::create_directories(dir);
  json cases = json::array();
  for (const auto& p : plan(spec)) {
    const auto ph = generate_phantom(p.cfg, p.id);
    std::map<std::string, LabelMap> labels{{"organ", ph.organ}};
    if (p.split != Split::Unlabeled) labels.emplace("tumor", ph.tumor);
    save_case(dir / (p.id + ".json"), ph.image, labels);
    cases.push_back({{"id", p.id}, {"sidecar", p.id + ".json"}, {"split", to_string(p.split)},
                     {"phantom_seed", p.cfg.seed}});
  }
  json m = {{"format", "oncosynth-dataset"}, {"version", 1}, {"seed", spec.seed},
            {"window", {window.lo, window.hi}}, {"cases", cases}};
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot write manifest in '" + dir.string() + "'");
  os << m.dump(2) << "\n";
}

LoadedDataset load_dataset(const fs::path& manifest) {
  std::ifstream is(manifest);
  if (!is) fail(ErrorCode::Io, "cannot open dataset manifest '" + manifest.string() + "'");
  json m;
  try {
    m = json::parse(is);
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, manifest.string() + ": " + e.what());
  }
  if (m.value("format", "") != "oncosynth-dataset") {
    fail(ErrorCode::CorruptFile, manifest.string() + ": not a dataset manifest");
  }
  LoadedDataset out;
  out.window = {m.at("window")[0].get<double>(), m.at("window")[1].get<double>()};
  PhantomDataset ds;
  const auto dir = manifest.parent_path();
  for (const auto& c : m.at("cases")) {
    const auto split = split_from_string(c.at("split").get<std::string>());
    auto rec = load_case(dir / c.at("sidecar").get<std::string>());
    auto organ = rec.labels.find("organ");
    if (organ == rec.labels.end()) fail(ErrorCode::CorruptFile, rec.image.id + ": missing organ label");
    auto tumor = rec.labels.find("tumor");
    const LabelMap* t = split == Split::Unlabeled || tumor == rec.labels.end() ? nullptr : &tumor->second;
    place(ds, split, to_train_case(rec.image, organ->second, t, out.window));
  }
  ds.pool.validate();
  out.pool = std::move(ds.pool);
  out.test = std::move(ds.test);
  return out;
}

}  // namespace oncosynth
