#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oncosynth/error.hpp"

namespace oncosynth {

/// Grid extent in voxels. x varies fastest in memory.
struct Shape3 {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  bool valid() const { return nx >= 1 && ny >= 1 && nz >= 1; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Voxel size in millimetres.
struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  bool valid() const { return x > 0.0 && y > 0.0 && z > 0.0; }
  double voxel_volume() const { return x * y * z; }
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

struct Index3 {
  int x = 0;
  int y = 0;
  int z = 0;
  friend bool operator==(const Index3&, const Index3&) = default;
};

/// Dense 3-D array.
template <typename T>
class Grid3 {
 public:
  Grid3() = default;
  explicit Grid3(Shape3 shape, T fill = T{}) : shape_(shape) {
    if (!shape.valid()) {
      fail(ErrorCode::InvalidArgument, "grid dimensions must be >= 1");
    }
    data_.assign(shape.count(), fill);
  }
  Grid3(Shape3 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (!shape.valid() || data_.size() != shape.count()) {
      fail(ErrorCode::ShapeMismatch, "grid payload does not match its shape");
    }
  }

  const Shape3& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::size_t offset(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(shape_.nx) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(shape_.ny) * static_cast<std::size_t>(z));
  }
  Index3 index_of(std::size_t offset) const {
    const auto nx = static_cast<std::size_t>(shape_.nx);
    const auto ny = static_cast<std::size_t>(shape_.ny);
    return {static_cast<int>(offset % nx), static_cast<int>((offset / nx) % ny),
            static_cast<int>(offset / (nx * ny))};
  }
  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < shape_.nx && y < shape_.ny && z < shape_.nz;
  }

  T& operator()(int x, int y, int z) { return data_[offset(x, y, z)]; }
  const T& operator()(int x, int y, int z) const { return data_[offset(x, y, z)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  friend bool operator==(const Grid3&, const Grid3&) = default;

 private:
  Shape3 shape_{};
  std::vector<T> data_;
};

/// Scalar image. Raw HU before windowing, [0,1] after.
struct Volume {
  Grid3<float> data;
  Spacing spacing;
  std::string id;

  Volume() = default;
  Volume(Grid3<float> grid, Spacing sp, std::string case_id = {});

  const Shape3& shape() const { return data.shape(); }
  friend bool operator==(const Volume&, const Volume&) = default;
};

/// Integer voxel classes; 0 is background.
struct LabelMap {
  Grid3<std::uint8_t> data;
  Spacing spacing;
  std::vector<std::uint8_t> classes{0, 1};

  LabelMap() = default;
  LabelMap(Grid3<std::uint8_t> grid, Spacing sp, std::vector<std::uint8_t> class_set = {0, 1});

  const Shape3& shape() const { return data.shape(); }
  std::size_t count(std::uint8_t label) const;
  std::size_t count_nonzero() const;
  bool empty() const { return count_nonzero() == 0; }
  /// Binary map of voxels equal to `label`.
  LabelMap select(std::uint8_t label) const;
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

void require_same_shape(const Shape3& a, const Shape3& b, const char* what);

/// Clinical intensity window in HU.
struct HuWindow {
  double lo = -175.0;
  double hi = 250.0;

  static HuWindow abdomen() { return {-175.0, 250.0}; }
  static HuWindow chest() { return {-1000.0, 500.0}; }
};

/// (clamp(v, lo, hi) - lo) / (hi - lo). Throws NonFiniteInput on NaN/inf.
Volume clip_and_normalize(const Volume& v, HuWindow w);
/// Inverse map from [0,1] back to HU (lossy where clipping happened).
Volume to_hu(const Volume& v, HuWindow w);

}  // namespace oncosynth
