#include "oncosynth/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace oncosynth {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::ShapeMismatch: return "shape_mismatch";
    case ErrorCode::NonFiniteInput: return "non_finite_input";
    case ErrorCode::InfeasibleGeometry: return "infeasible_geometry";
    case ErrorCode::EmptyMask: return "empty_mask";
    case ErrorCode::OrganTooSmall: return "organ_too_small";
    case ErrorCode::CorruptFile: return "corrupt_file";
    case ErrorCode::Io: return "io";
    case ErrorCode::Diverged: return "diverged";
    case ErrorCode::UnknownCase: return "unknown_case";
    case ErrorCode::SessionClosed: return "session_closed";
    case ErrorCode::InsufficientPool: return "insufficient_pool";
    case ErrorCode::ConfigKey: return "config_key";
  }
  return "unknown";
}

Volume::Volume(Grid3<float> grid, Spacing sp, std::string case_id)
    : data(std::move(grid)), spacing(sp), id(std::move(case_id)) {
  if (!spacing.valid()) {
    fail(ErrorCode::InvalidArgument, "volume spacing must be positive");
  }
}

LabelMap::LabelMap(Grid3<std::uint8_t> grid, Spacing sp, std::vector<std::uint8_t> class_set)
    : data(std::move(grid)), spacing(sp), classes(std::move(class_set)) {
  if (!spacing.valid()) {
    fail(ErrorCode::InvalidArgument, "label spacing must be positive");
  }
  for (auto v : data.values()) {
    if (std::find(classes.begin(), classes.end(), v) == classes.end()) {
      fail(ErrorCode::InvalidArgument,
           "label value " + std::to_string(v) + " is outside the declared class set");
    }
  }
}

std::size_t LabelMap::count(std::uint8_t label) const {
  return static_cast<std::size_t>(std::count(data.values().begin(), data.values().end(), label));
}

std::size_t LabelMap::count_nonzero() const {
  return static_cast<std::size_t>(
      std::count_if(data.values().begin(), data.values().end(), [](auto v) { return v != 0; }));
}

LabelMap LabelMap::select(std::uint8_t label) const {
  Grid3<std::uint8_t> out(data.shape());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = data[i] == label ? 1 : 0;
  return LabelMap(std::move(out), spacing);
}

void require_same_shape(const Shape3& a, const Shape3& b, const char* what) {
  if (!(a == b)) {
    std::ostringstream os;
    os << what << ": shape " << a.nx << "x" << a.ny << "x" << a.nz << " vs " << b.nx << "x"
       << b.ny << "x" << b.nz;
    fail(ErrorCode::ShapeMismatch, os.str());
  }
}

Volume clip_and_normalize(const Volume& v, HuWindow w) {
  if (!(w.lo < w.hi)) fail(ErrorCode::InvalidArgument, "window requires lo < hi");
  const double width = w.hi - w.lo;
  Grid3<float> out(v.shape());
  const auto in = v.data.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double hu = in[i];
    if (!std::isfinite(hu)) {
      const auto at = v.data.index_of(i);
      std::ostringstream os;
      os << "case '" << v.id << "': non-finite voxel at (" << at.x << "," << at.y << "," << at.z
         << ")";
      fail(ErrorCode::NonFiniteInput, os.str());
    }
    out[i] = static_cast<float>((std::clamp(hu, w.lo, w.hi) - w.lo) / width);
  }
  return Volume(std::move(out), v.spacing, v.id);
}

Volume to_hu(const Volume& v, HuWindow w) {
  if (!(w.lo < w.hi)) fail(ErrorCode::InvalidArgument, "window requires lo < hi");
  Grid3<float> out(v.shape());
  const auto in = v.data.values();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<float>(w.lo + in[i] * (w.hi - w.lo));
  return Volume(std::move(out), v.spacing, v.id);
}

}  // namespace oncosynth
