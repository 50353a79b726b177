#pragma once
// Small fixtures shared by the unit tests.

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "oncosynth/rng.hpp"
#include "oncosynth/volume.hpp"

namespace oncosynth::testing {

inline Volume random_volume(Shape3 s, std::uint64_t seed, Spacing sp = {}) {
  Rng rng(seed);
  Grid3<float> g(s);
  for (auto& v : g.values()) v = static_cast<float>(rng.uniform());
  return Volume(std::move(g), sp, "v" + std::to_string(seed));
}

/// Each voxel on with probability p.
inline LabelMap random_mask(Shape3 s, double p, std::uint64_t seed, Spacing sp = {}) {
  Rng rng(seed);
  Grid3<std::uint8_t> g(s);
  for (auto& v : g.values()) v = rng.uniform() < p ? 1 : 0;
  return LabelMap(std::move(g), sp);
}

inline LabelMap box_mask(Shape3 s, Index3 lo, Index3 hi, Spacing sp = {}) {
  Grid3<std::uint8_t> g(s);
  for (int z = lo.z; z < hi.z; ++z)
    for (int y = lo.y; y < hi.y; ++y)
      for (int x = lo.x; x < hi.x; ++x) g(x, y, z) = 1;
  return LabelMap(std::move(g), sp);
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("oncosynth-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(Rng::splitmix(reinterpret_cast<std::uintptr_t>(this)) % 100000));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Every regular file below `root`, relative paths, sorted.
inline std::vector<std::string> list_files(const std::filesystem::path& root) {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(std::filesystem::relative(e.path(), root).string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace oncosynth::testing
