#include "swaptest/montage.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "swaptest/error.hpp"
#include "swaptest/formats.hpp"

namespace swaptest {

std::vector<int> slice_positions(int length, int n) {
  if (n < 1 || n > length)
    throw ConfigError("slice count must lie in [1, " + std::to_string(length) + "]");
  std::vector<int> pos(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    pos[static_cast<std::size_t>(i)] =
        static_cast<int>(std::floor((i + 0.5) * static_cast<double>(length) / n));
  return pos;
}

RgbImage render_montage(const Volume& intensity, const Volume* overlay, Plane plane,
                        int n_slices, int columns) {
  if (overlay && overlay->dims() != intensity.dims())
    throw ShapeError("overlay dims differ from the intensity volume");
  if (columns < 1) throw ConfigError("montage needs at least one column");
  const Vec3i d = intensity.dims();
  const int axis = plane_axis(plane);
  const int row_axis = axis == 2 ? 1 : 2;  // z for sagittal/coronal, y for axial
  const int col_axis = axis == 0 ? 1 : 0;  // y for sagittal, x otherwise
  const int tile_h = d[row_axis], tile_w = d[col_axis];
  const auto positions = slice_positions(d[axis], n_slices);
  const int cols = std::min(n_slices, columns);
  const int rows = (n_slices + cols - 1) / cols;

  double max_abs = 0.0;
  if (overlay)
    for (float v : overlay->values()) max_abs = std::max(max_abs, std::abs(static_cast<double>(v)));

  RgbImage img;
  img.width = tile_w * cols;
  img.height = tile_h * rows;
  img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
  for (int t = 0; t < n_slices; ++t) {
    const int tr = t / cols, tc = t % cols;
    for (int r = 0; r < tile_h; ++r)
      for (int c = 0; c < tile_w; ++c) {
        Vec3i p;
        p[axis] = positions[static_cast<std::size_t>(t)];
        p[row_axis] = tile_h - 1 - r;
        p[col_axis] = c;
        const double v = std::clamp(static_cast<double>(intensity.at(p.x, p.y, p.z)), 0.0, 1.0);
        const double gray = std::round(v * 255.0);
        double rgb[3] = {gray, gray, gray};
        if (max_abs > 0.0) {
          const double o = overlay->at(p.x, p.y, p.z);
          const double alpha = 0.6 * std::abs(o) / max_abs;
          const double tint[3] = {o > 0 ? 255.0 : 0.0, 0.0, o < 0 ? 255.0 : 0.0};
          for (int k = 0; k < 3; ++k) rgb[k] = std::round((1.0 - alpha) * gray + alpha * tint[k]);
        }
        const std::size_t px =
            (static_cast<std::size_t>(tr * tile_h + r) * img.width + (tc * tile_w + c)) * 3;
        for (int k = 0; k < 3; ++k) img.rgb[px + static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(rgb[k]);
      }
  }
  return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  write_file(path, encode_ppm(image));
}

}  // namespace swaptest
