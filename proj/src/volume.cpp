#include "swaptest/volume.hpp"

#include <algorithm>
#include <numeric>

#include "swaptest/error.hpp"
#include "swaptest/stats.hpp"

namespace swaptest {

namespace {

constexpr const char* kAxisNames[3] = {"x", "y", "z"};

void require_positive(Vec3i dims) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) {
      throw ShapeError("volume dimension " + std::string(kAxisNames[a]) +
                       " must be positive, got " + std::to_string(dims[a]));
    }
  }
}

void require_patch_in_bounds(Vec3i dims, Vec3i origin, int s) {
  if (s <= 0) throw ShapeError("patch size must be positive");
  for (int a = 0; a < 3; ++a) {
    if (origin[a] < 0 || origin[a] + s > dims[a]) {
      throw ShapeError("patch at " + to_string(origin) + " of size " +
                       std::to_string(s) + " exceeds axis " + kAxisNames[a] +
                       " of " + to_string(dims));
    }
  }
}

}  // namespace

std::string to_string(const Vec3i& v) {
  return "(" + std::to_string(v.x) + ", " + std::to_string(v.y) + ", " +
         std::to_string(v.z) + ")";
}

Volume::Volume(Vec3i dims, float fill, bool standardized)
    : dims_(dims), standardized_(standardized) {
  require_positive(dims);
  data_.assign(dims.product(), fill);
}

Volume::Volume(Vec3i dims, std::vector<float> data, bool standardized)
    : dims_(dims), data_(std::move(data)), standardized_(standardized) {
  require_positive(dims);
  if (data_.size() != dims.product()) {
    throw ShapeError("volume data length " + std::to_string(data_.size()) +
                     " does not match dims " + to_string(dims));
  }
}

double Volume::mean() const {
  if (data_.empty()) return 0.0;
  double s = 0.0;
  for (float v : data_) s += v;
  return s / static_cast<double>(data_.size());
}

Volume standardize(const Volume& v, double p_low, double p_high) {
  if (v.standardized()) throw ConfigError("volume is already standardized");
  if (!(p_low >= 0.0 && p_low < p_high && p_high <= 100.0)) {
    throw ConfigError("percentiles must satisfy 0 <= p_low < p_high <= 100");
  }
  std::vector<float> sorted(v.values().begin(), v.values().end());
  std::sort(sorted.begin(), sorted.end());
  const double q_low = percentile_sorted(sorted, p_low);
  const double q_high = percentile_sorted(sorted, p_high);

  std::vector<float> out(v.size(), 0.0f);
  if (q_high > q_low) {
    const double width = q_high - q_low;
    auto src = v.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double t = (static_cast<double>(src[i]) - q_low) / width;
      out[i] = static_cast<float>(std::clamp(t, 0.0, 1.0));
    }
  }
  return Volume(v.dims(), std::move(out), true);
}

Vec3i center_crop_offset(Vec3i dims, Vec3i size) {
  Vec3i off;
  for (int a = 0; a < 3; ++a) {
    if (size[a] <= 0 || size[a] > dims[a]) {
      throw ShapeError("crop size " + std::to_string(size[a]) + " on axis " +
                       kAxisNames[a] + " does not fit dimension " +
                       std::to_string(dims[a]));
    }
    off[a] = (dims[a] - size[a]) / 2;
  }
  return off;
}

Volume center_crop(const Volume& v, Vec3i size) {
  const Vec3i off = center_crop_offset(v.dims(), size);
  Volume out(size, 0.0f, v.standardized());
  for (int z = 0; z < size.z; ++z)
    for (int y = 0; y < size.y; ++y)
      for (int x = 0; x < size.x; ++x)
        out.at(x, y, z) = v.at(x + off.x, y + off.y, z + off.z);
  return out;
}

std::vector<int> axis_origins(int length, int patch_size, int stride) {
  std::vector<int> o;
  for (int p = 0; p + patch_size <= length; p += stride) o.push_back(p);
  if (o.back() != length - patch_size) o.push_back(length - patch_size);
  return o;
}

PatchGrid build_patch_grid(Vec3i dims, int patch_size, int stride) {
  require_positive(dims);
  if (patch_size <= 0) throw ShapeError("patch size must be positive");
  for (int a = 0; a < 3; ++a) {
    if (patch_size > dims[a]) {
      throw ShapeError("patch size " + std::to_string(patch_size) +
                       " exceeds axis " + kAxisNames[a] + " length " +
                       std::to_string(dims[a]));
    }
  }
  if (stride <= 0 || stride > patch_size) {
    throw ShapeError("stride must lie in [1, patch_size]");
  }
  PatchGrid g{dims, patch_size, stride, {}};
  const auto ox = axis_origins(dims.x, patch_size, stride);
  const auto oy = axis_origins(dims.y, patch_size, stride);
  const auto oz = axis_origins(dims.z, patch_size, stride);
  g.origins.reserve(ox.size() * oy.size() * oz.size());
  for (int z : oz)
    for (int y : oy)
      for (int x : ox) g.origins.push_back({x, y, z});
  return g;
}

bool patch_in_bounds(Vec3i dims, Vec3i origin, int s) {
  for (int a = 0; a < 3; ++a)
    if (origin[a] < 0 || origin[a] + s > dims[a]) return false;
  return s > 0;
}

bool patch_contains(Vec3i o, int s, int x, int y, int z) {
  return x >= o.x && x < o.x + s && y >= o.y && y < o.y + s && z >= o.z &&
         z < o.z + s;
}

void copy_patch_into(const Volume& src, Volume& dst, Vec3i o, int s) {
  if (src.dims() != dst.dims()) {
    throw ShapeError("copy_patch dimension mismatch: " + to_string(src.dims()) +
                     " vs " + to_string(dst.dims()));
  }
  require_patch_in_bounds(dst.dims(), o, s);
  auto in = src.values();
  auto out = dst.values();
  for (int z = o.z; z < o.z + s; ++z)
    for (int y = o.y; y < o.y + s; ++y) {
      const std::size_t row = dst.index(o.x, y, z);
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(row), s,
                  out.begin() + static_cast<std::ptrdiff_t>(row));
    }
}

Volume copy_patch(const Volume& src, const Volume& dst, Vec3i origin, int s) {
  Volume out = dst;
  copy_patch_into(src, out, origin, s);
  return out;
}

void fill_patch_into(Volume& v, Vec3i o, int s, float fill) {
  require_patch_in_bounds(v.dims(), o, s);
  auto out = v.values();
  for (int z = o.z; z < o.z + s; ++z)
    for (int y = o.y; y < o.y + s; ++y) {
      const std::size_t row = v.index(o.x, y, z);
      std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(row), s, fill);
    }
}

Volume fill_patch(const Volume& v, Vec3i origin, int s, float fill) {
  Volume out = v;
  fill_patch_into(out, origin, s, fill);
  return out;
}

}  // namespace swaptest
