#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace swaptest {

// Integer triple used both for volume dimensions and voxel coordinates.
struct Vec3i {
  int x = 0;
  int y = 0;
  int z = 0;

  int operator[](int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
  int& operator[](int axis) { return axis == 0 ? x : axis == 1 ? y : z; }
  friend bool operator==(const Vec3i&, const Vec3i&) = default;

  std::size_t product() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) *
           static_cast<std::size_t>(z);
  }
};

std::string to_string(const Vec3i& v);

// Dense scalar field. Voxel (x, y, z) lives at x + nx * (y + ny * z).
class Volume {
 public:
  Volume() = default;
  Volume(Vec3i dims, float fill = 0.0f, bool standardized = false);
  Volume(Vec3i dims, std::vector<float> data, bool standardized);

  const Vec3i& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool standardized() const { return standardized_; }
  void set_standardized(bool s) { standardized_ = s; }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_.x) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims_.y) * static_cast<std::size_t>(z));
  }
  float& at(int x, int y, int z) { return data_[index(x, y, z)]; }
  float at(int x, int y, int z) const { return data_[index(x, y, z)]; }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  double mean() const;

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Vec3i dims_{};
  std::vector<float> data_;
  bool standardized_ = false;
};

inline constexpr double kDefaultLowPercentile = 0.2;
inline constexpr double kDefaultHighPercentile = 99.8;

// Maps voxels linearly so that the low/high percentiles land on 0/1, then
// clamps to [0, 1]. A degenerate window (q_high == q_low) maps everything to 0.
Volume standardize(const Volume& v, double p_low = kDefaultLowPercentile,
                   double p_high = kDefaultHighPercentile);

// Axis-aligned subvolume of `size` centered in v. When dims - size is odd the
// extra voxel is left on the high side, i.e. offset = (dims - size) / 2.
Volume center_crop(const Volume& v, Vec3i size);
Vec3i center_crop_offset(Vec3i dims, Vec3i size);

// ---------------------------------------------------------------------------
// Patch grid

struct PatchGrid {
  Vec3i dims;
  int patch_size = 0;
  int stride = 0;
  std::vector<Vec3i> origins;  // x fastest, then y, then z

  std::size_t size() const { return origins.size(); }
  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

// Per-axis origins {0, t, 2t, ...} plus the terminal origin dims - s when it
// is not already present, so every voxel is covered.
std::vector<int> axis_origins(int length, int patch_size, int stride);
PatchGrid build_patch_grid(Vec3i dims, int patch_size, int stride);

// Cube [origin, origin + s) intersect check helpers.
bool patch_in_bounds(Vec3i dims, Vec3i origin, int patch_size);
bool patch_contains(Vec3i origin, int patch_size, int x, int y, int z);

// dst with the cube at origin replaced by src's voxels. dst is not modified.
Volume copy_patch(const Volume& src, const Volume& dst, Vec3i origin,
                  int patch_size);
// In-place variant used by the heatmap engines.
void copy_patch_into(const Volume& src, Volume& dst, Vec3i origin,
                     int patch_size);

Volume fill_patch(const Volume& v, Vec3i origin, int patch_size, float fill);
void fill_patch_into(Volume& v, Vec3i origin, int patch_size, float fill);

}  // namespace swaptest
