#include "oncosynth/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

extern char** environ;

#ifndef ONCOSYNTH_VERSION
#define ONCOSYNTH_VERSION "0.0.0"
#endif
#ifndef ONCOSYNTH_GIT_REV
#define ONCOSYNTH_GIT_REV "unknown"
#endif

namespace oncosynth {

using nlohmann::json;

namespace {

enum class Kind { Int, Real, Bool, Str };

struct KeySpec {
  Kind kind;
  json def;
  std::vector<std::string> choices{};  // Str only; empty = free text
};

const std::map<std::string, KeySpec>& schema() {
  static const std::map<std::string, KeySpec> s = [] {
    const AdvConfig a;
    const SegTrainConfig sg;
    const InferConfig in;
    const PhantomDatasetSpec ph;
    const turing::TuringDesign td;
    std::map<std::string, KeySpec> m;
    m["seed"] = {Kind::Int, nullptr};

    m["data.labeled"] = {Kind::Int, ph.labeled};
    m["data.unlabeled"] = {Kind::Int, ph.unlabeled};
    m["data.test"] = {Kind::Int, ph.test};
    m["data.window"] = {Kind::Str, "abdomen", {"abdomen", "chest"}};

    m["adv.lambda_cls"] = {Kind::Real, a.lambda_cls};
    m["adv.lr_synthesis"] = {Kind::Real, a.lr_synthesis};
    m["adv.lr_segmentation"] = {Kind::Real, a.lr_segmentation};
    m["adv.weight_decay"] = {Kind::Real, a.weight_decay};
    m["adv.batch"] = {Kind::Int, a.batch};
    m["adv.stage1_epochs"] = {Kind::Int, a.stage1_epochs};
    m["adv.stage2_epochs"] = {Kind::Int, a.stage2_epochs};
    m["adv.stage2_steps_per_epoch"] = {Kind::Int, a.stage2_steps_per_epoch};
    m["adv.seg_patch"] = {Kind::Int, a.seg_patch.nx};
    m["adv.synth_patch"] = {Kind::Int, a.synth_patch.nx};
    m["adv.cls_patch"] = {Kind::Int, a.cls_patch.nx};
    m["adv.seg_base"] = {Kind::Int, a.seg_net.base_channels};
    m["adv.gen_base"] = {Kind::Int, a.gen_net.base_channels};
    m["adv.cls_base"] = {Kind::Int, a.cls_net.base_channels};
    m["adv.tumor_centered_fraction"] = {Kind::Real, a.tumor_centered_fraction};
    m["adv.flip"] = {Kind::Bool, a.flip_augment};

    m["filter.sigma"] = {Kind::Real, a.filter.sigma};
    m["filter.radius"] = {Kind::Int, a.filter.radius};
    m["filter.blur_generator_field"] = {Kind::Bool, a.filter.blur_generator_field};

    m["mask.lo_mm"] = {Kind::Real, a.mask_size.lo_mm};
    m["mask.hi_mm"] = {Kind::Real, a.mask_size.hi_mm};
    m["mask.category"] = {Kind::Str, "any", {"any", "small"}};

    m["gate.threshold"] = {Kind::Real, kDefaultQualityThreshold};
    m["gate.failed"] = {Kind::Str, "original", {"original", "drop"}};

    m["seg.ratio_labeled"] = {Kind::Int, sg.ratio_labeled};
    m["seg.ratio_synthetic"] = {Kind::Int, sg.ratio_synthetic};
    m["seg.lr"] = {Kind::Real, sg.lr};
    m["seg.weight_decay"] = {Kind::Real, sg.weight_decay};
    m["seg.batch"] = {Kind::Int, sg.batch};
    m["seg.epochs"] = {Kind::Int, sg.epochs};
    m["seg.patch"] = {Kind::Int, sg.patch.nx};
    m["seg.base"] = {Kind::Int, sg.net.base_channels};
    m["seg.tumor_centered_fraction"] = {Kind::Real, sg.tumor_centered_fraction};
    m["seg.flip"] = {Kind::Bool, sg.flip_augment};
    m["seg.prefetch"] = {Kind::Int, sg.stream.prefetch};

    m["infer.window"] = {Kind::Int, in.window.nx};
    m["infer.overlap"] = {Kind::Real, in.overlap};
    m["infer.threshold"] = {Kind::Real, in.threshold};

    m["synth.count"] = {Kind::Int, 10};
    m["synth.preview"] = {Kind::Bool, false};

    m["turing.real_per_type"] = {Kind::Int, td.real_per_type};
    m["turing.synthetic_per_type"] = {Kind::Int, td.synthetic_per_type};
    m["turing.host"] = {Kind::Str, "127.0.0.1"};
    m["turing.port"] = {Kind::Int, 8080};

    for (const char* p : {"paths.data", "paths.out", "paths.segmenter", "paths.generator", "paths.classifier",
                          "paths.model", "paths.input", "paths.pred", "paths.gt", "paths.cases", "paths.static"}) {
      m[p] = {Kind::Str, ""};
    }
    return m;
  }();
  return s;
}

const KeySpec& spec_of(const std::string& key) {
  auto it = schema().find(key);
  if (it == schema().end()) fail(ErrorCode::ConfigKey, key);
  return it->second;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& why) {
  fail(ErrorCode::InvalidArgument, "config " + key + ": " + why);
}

json coerce(const std::string& key, const KeySpec& k, const json& v) {
  if (v.is_null()) {
    if (!k.def.is_null()) bad_value(key, "cannot be null");
    return v;
  }
  switch (k.kind) {
    case Kind::Int:
      if (v.is_number_integer()) return v;
      if (v.is_number_float() && v.get<double>() == std::floor(v.get<double>())) return v.get<std::int64_t>();
      bad_value(key, "expected an integer");
    case Kind::Real:
      if (v.is_number()) return v.get<double>();
      bad_value(key, "expected a number");
    case Kind::Bool:
      if (v.is_boolean()) return v;
      bad_value(key, "expected true or false");
    case Kind::Str:
      if (!v.is_string()) bad_value(key, "expected a string");
      if (!k.choices.empty() && std::find(k.choices.begin(), k.choices.end(), v.get<std::string>()) == k.choices.end()) {
        std::string all;
        for (const auto& c : k.choices) all += (all.empty() ? "" : "|") + c;
        bad_value(key, "expected one of " + all);
      }
      return v;
  }
  return v;
}

json parse_text(const std::string& key, const KeySpec& k, const std::string& text) {
  switch (k.kind) {
    case Kind::Int: {
      std::int64_t out = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
      if (ec != std::errc{} || p != text.data() + text.size()) bad_value(key, "expected an integer, got '" + text + "'");
      return out;
    }
    case Kind::Real: {
      try {
        std::size_t used = 0;
        const double d = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return d;
      } catch (const std::logic_error&) {
        bad_value(key, "expected a number, got '" + text + "'");
      }
    }
    case Kind::Bool:
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      bad_value(key, "expected true or false, got '" + text + "'");
    case Kind::Str: return coerce(key, k, text);
  }
  return nullptr;
}

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out[key] = *it;
    }
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [k, s] : schema()) values_[k] = s.def;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, s] : schema()) out.push_back(k);
  return out;
}

bool RunConfig::known(const std::string& key) { return schema().count(key) > 0; }

void RunConfig::set(const std::string& key, const std::string& text) {
  const auto& k = spec_of(key);
  values_[key] = parse_text(key, k, text);
}

void RunConfig::set_json(const std::string& key, const json& v) { values_[key] = coerce(key, spec_of(key), v); }

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorCode::InvalidArgument, "override must be key=value: " + assignment);
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void RunConfig::merge_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::InvalidArgument, "config must be a JSON object");
  if (j.contains("format") && j["format"] == "oncosynth-run") {
    merge_json(j.at("config"));
    return;
  }
  std::map<std::string, json> flat;
  flatten(j, "", flat);
  for (const auto& [k, v] : flat) set_json(k, v);
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
  merge_json(j);
}

void RunConfig::apply_env(const std::map<std::string, std::string>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string key;
    const std::string rest = name.substr(prefix.size());
    for (std::size_t i = 0; i < rest.size(); ++i) {
      if (rest.compare(i, 2, "__") == 0) {
        key += '.';
        ++i;
      } else {
        key += static_cast<char>(std::tolower(static_cast<unsigned char>(rest[i])));
      }
    }
    set(key, value);
  }
}

const json& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorCode::ConfigKey, key);
  return it->second;
}

double RunConfig::number(const std::string& key) const { return get(key).get<double>(); }
int RunConfig::integer(const std::string& key) const { return get(key).get<int>(); }
bool RunConfig::flag(const std::string& key) const { return get(key).get<bool>(); }
std::string RunConfig::str(const std::string& key) const { return get(key).get<std::string>(); }

std::uint64_t RunConfig::require_seed() const {
  const auto& s = get("seed");
  if (s.is_null()) fail(ErrorCode::InvalidArgument, "config seed: required for this command");
  return s.get<std::uint64_t>();
}

json RunConfig::to_json() const {
  json j = json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

std::string RunConfig::hash() const {
  json j = json::object();
  for (const auto& [k, v] : values_) {
    if (k.rfind("paths.", 0) != 0) j[k] = v;
  }
  return hex64(fnv1a64(j.dump()));
}

AdvConfig RunConfig::adv() const {
  AdvConfig a;
  a.seed = is_set("seed") ? get("seed").get<std::uint64_t>() : 0;
  a.lambda_cls = number("adv.lambda_cls");
  a.lr_synthesis = number("adv.lr_synthesis");
  a.lr_segmentation = number("adv.lr_segmentation");
  a.weight_decay = number("adv.weight_decay");
  a.batch = integer("adv.batch");
  a.stage1_epochs = integer("adv.stage1_epochs");
  a.stage2_epochs = integer("adv.stage2_epochs");
  a.stage2_steps_per_epoch = integer("adv.stage2_steps_per_epoch");
  const auto cube = [](int n) { return Shape3{n, n, n}; };
  a.seg_patch = cube(integer("adv.seg_patch"));
  a.synth_patch = cube(integer("adv.synth_patch"));
  a.cls_patch = cube(integer("adv.cls_patch"));
  a.seg_net.base_channels = integer("adv.seg_base");
  a.gen_net.base_channels = integer("adv.gen_base");
  a.cls_net.base_channels = integer("adv.cls_base");
  a.tumor_centered_fraction = number("adv.tumor_centered_fraction");
  a.flip_augment = flag("adv.flip");
  a.filter.sigma = number("filter.sigma");
  a.filter.radius = integer("filter.radius");
  a.filter.blur_generator_field = flag("filter.blur_generator_field");
  a.mask_size.lo_mm = number("mask.lo_mm");
  a.mask_size.hi_mm = number("mask.hi_mm");
  a.mask_size.category = str("mask.category") == "small" ? SizeCategory::Small : SizeCategory::Any;
  a.threshold = number("gate.threshold");
  a.validate();
  return a;
}

StreamConfig RunConfig::stream() const {
  const AdvConfig a = adv();
  StreamConfig s;
  s.threshold = a.threshold;
  s.failed = str("gate.failed") == "drop" ? FailedCasePolicy::Drop : FailedCasePolicy::UseOriginal;
  s.mask_size = a.mask_size;
  s.sampler = a.sampler;
  s.filter = a.filter;
  s.prefetch = integer("seg.prefetch");
  return s;
}

SegTrainConfig RunConfig::seg() const {
  SegTrainConfig c;
  c.seed = is_set("seed") ? get("seed").get<std::uint64_t>() : 0;
  c.ratio_labeled = integer("seg.ratio_labeled");
  c.ratio_synthetic = integer("seg.ratio_synthetic");
  c.lr = number("seg.lr");
  c.weight_decay = number("seg.weight_decay");
  c.batch = integer("seg.batch");
  c.epochs = integer("seg.epochs");
  const int p = integer("seg.patch");
  c.patch = {p, p, p};
  c.net.base_channels = integer("seg.base");
  c.tumor_centered_fraction = number("seg.tumor_centered_fraction");
  c.flip_augment = flag("seg.flip");
  c.stream = stream();
  c.validate();
  return c;
}

InferConfig RunConfig::infer() const {
  InferConfig c;
  const int w = integer("infer.window");
  c.window = {w, w, w};
  c.overlap = number("infer.overlap");
  c.threshold = number("infer.threshold");
  if (w < 1 || !(c.overlap >= 0 && c.overlap < 1) || !(c.threshold > 0 && c.threshold < 1)) {
    fail(ErrorCode::InvalidArgument, "config infer: window >= 1, overlap in [0,1), threshold in (0,1)");
  }
  return c;
}

PhantomDatasetSpec RunConfig::phantom() const {
  PhantomDatasetSpec s;
  s.labeled = integer("data.labeled");
  s.unlabeled = integer("data.unlabeled");
  s.test = integer("data.test");
  if (s.labeled < 0 || s.unlabeled < 0 || s.test < 0) fail(ErrorCode::InvalidArgument, "config data: counts must be >= 0");
  s.seed = require_seed();
  return s;
}

turing::TuringDesign RunConfig::turing_design() const {
  turing::TuringDesign d;
  d.real_per_type = integer("turing.real_per_type");
  d.synthetic_per_type = integer("turing.synthetic_per_type");
  d.validate();
  return d;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::map<std::string, std::string> process_env() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string s = *e;
    const auto eq = s.find('=');
    if (eq != std::string::npos) out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

std::string version_string() { return std::string(ONCOSYNTH_VERSION) + "+" + ONCOSYNTH_GIT_REV; }

json RunManifest::to_json() const {
  return {{"format", "oncosynth-run"},
          {"version", 1},
          {"command", command},
          {"software", version},
          {"config_hash", config.hash()},
          {"seed", config.get("seed")},
          {"config", config.to_json()},
          {"outputs", outputs}};
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "run_manifest.json");
  if (!out) fail(ErrorCode::Io, "cannot write " + (dir / "run_manifest.json").string());
  out << m.to_json().dump(2) << "\n";
}

}  // namespace oncosynth
