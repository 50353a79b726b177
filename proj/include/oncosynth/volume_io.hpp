#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "oncosynth/volume.hpp"

namespace oncosynth {

/// A volume with named label maps (e.g. "organ", "tumor") on the same grid.
struct CaseRecord {
  Volume image;
  std::map<std::string, LabelMap> labels;
};

// On-disk layout: `<stem>.json` sidecar holding shape, spacing, dtype, class
// sets and payload file names, plus one raw little-endian payload per array
// (`<stem>.img.raw`, `<stem>.<label>.raw`). Payload paths are relative to the
// sidecar's directory.

void save_case(const std::filesystem::path& sidecar, const Volume& image,
               const std::map<std::string, LabelMap>& labels = {});
CaseRecord load_case(const std::filesystem::path& sidecar);

inline void save_volume(const std::filesystem::path& sidecar, const Volume& image) {
  save_case(sidecar, image);
}
inline Volume load_volume(const std::filesystem::path& sidecar) {
  return load_case(sidecar).image;
}

}  // namespace oncosynth
