#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "swaptest/network_spec.hpp"
#include "swaptest/volume.hpp"

namespace swaptest {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

// n equally spaced slice indices along an axis of the given length:
// floor((i + 0.5) * length / n).
std::vector<int> slice_positions(int length, int n);

// Slice montage. Slices are laid out left to right, top to bottom in a grid of
// min(n, columns) columns; unused tiles stay black. Within a tile the row axis
// runs from its highest index at the top. Intensities in [0, 1] become gray;
// `overlay` (same dims, signed) tints positive values red and negative blue
// with opacity 0.6 * |value| / max|value|. A null or all-zero overlay leaves
// the grayscale untouched.
RgbImage render_montage(const Volume& intensity, const Volume* overlay, Plane plane,
                        int n_slices, int columns = 5);

// Binary PPM: "P6\n<width> <height>\n255\n" followed by RGB bytes.
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

}  // namespace swaptest
