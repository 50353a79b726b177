#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oncosynth/adversarial.hpp"
#include "oncosynth/dataset.hpp"
#include "oncosynth/seg_pipeline.hpp"
#include "oncosynth/turing.hpp"

namespace oncosynth {

/// Prefix for environment overrides: ONCOSYNTH_SEG__LR=1e-3 sets seg.lr
/// ("__" separates sections, the rest is lower-cased).
inline constexpr const char* kEnvPrefix = "ONCOSYNTH_";

/// Flat dotted-key configuration shared by every command. Keys are fixed by
/// a schema; setting anything else throws ConfigKey. `paths.*` keys are
/// recorded in manifests but left out of the hash.
class RunConfig {
 public:
  RunConfig();

  /// Schema keys in sorted order.
  static std::vector<std::string> keys();
  static bool known(const std::string& key);

  /// Parses `text` according to the key's type.
  void set(const std::string& key, const std::string& text);
  void set_json(const std::string& key, const nlohmann::json& v);
  /// "key=value".
  void apply_override(const std::string& assignment);
  /// Nested or flat JSON object; a run manifest contributes its "config".
  void merge_file(const std::filesystem::path& path);
  void merge_json(const nlohmann::json& j);
  /// Reads ONCOSYNTH_* variables from `env` (name -> value).
  void apply_env(const std::map<std::string, std::string>& env);

  const nlohmann::json& get(const std::string& key) const;
  bool is_set(const std::string& key) const { return !get(key).is_null(); }
  double number(const std::string& key) const;
  int integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::string str(const std::string& key) const;

  /// Training commands call this; seeds are never defaulted.
  std::uint64_t require_seed() const;

  /// Flat object, keys sorted.
  nlohmann::json to_json() const;
  /// FNV-1a 64 over the canonical dump of all non-path keys, hex.
  std::string hash() const;

  AdvConfig adv() const;
  SegTrainConfig seg() const;
  StreamConfig stream() const;
  InferConfig infer() const;
  PhantomDatasetSpec phantom() const;
  turing::TuringDesign turing_design() const;

 private:
  std::map<std::string, nlohmann::json> values_;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Environment as a map, for apply_env.
std::map<std::string, std::string> process_env();

/// Written as run_manifest.json next to every command's artifacts;
/// `--config run_manifest.json` replays it.
struct RunManifest {
  std::string command;
  std::string version;
  RunConfig config;
  std::map<std::string, std::string> outputs;

  nlohmann::json to_json() const;
};

void write_manifest(const std::filesystem::path& dir, const RunManifest& m);

/// Project version plus the git revision if one was known at configure time.
std::string version_string();

}  // namespace oncosynth
