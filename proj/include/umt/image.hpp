#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "umt/error.hpp"

namespace umt::img {

/// Grayscale raster, row-major, intensities in [0,1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.f)
      : width(w), height(h), data(size_t(w) * size_t(h), fill) {
    require(w >= 1 && h >= 1, Errc::precondition, "image dimensions must be >= 1");
  }

  float at(int x, int y) const { return data[size_t(y) * width + x]; }
  float& at(int x, int y) { return data[size_t(y) * width + x]; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  size_t pixel_count() const { return data.size(); }
};

/// Boolean foreground raster with the same geometry as its source image.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;  // 1 = foreground

  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false)
      : width(w), height(h), bits(size_t(w) * size_t(h), fill ? 1 : 0) {}

  bool at(int x, int y) const { return bits[size_t(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[size_t(y) * width + x] = v ? 1 : 0; }
  size_t count_foreground() const;
  bool operator==(const BinaryMask& o) const = default;
};

/// Quantizes an intensity in [0,1] to one of 256 histogram bins.
inline int intensity_bin(float v) {
  int b = int(std::lround(double(v) * 255.0));
  return b < 0 ? 0 : (b > 255 ? 255 : b);
}

/// Otsu's global threshold over a 256-bin histogram. Returns the bin index
/// that maximizes between-class variance (lowest index on ties) and the
/// mask of the darker side (bin <= threshold), which for fingerprint scans
/// is the ridge foreground. Throws DegenerateImage on constant images.
std::pair<int, BinaryMask> otsu_threshold(const GrayImage& img);

enum class MorphOp { erode, dilate, open, close };

/// Set morphology with a (2r+1)x(2r+1) square structuring element.
/// Out-of-bounds samples count as background. open = erode then dilate,
/// close = dilate then erode.
BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius);

/// Keeps only the largest 8-connected foreground component. Ties are broken
/// by the lowest top-left (row-major) pixel index. Empty in, empty out.
BinaryMask largest_component(const BinaryMask& mask);

struct Rotated {
  GrayImage image;
  BinaryMask valid;  // false where the bilinear sample fell outside the source
};

/// Rotates about the image center by `angle` radians, counterclockwise on
/// screen (x right, y down). Bilinear interpolation; output has the same
/// dimensions, with out-of-source samples zeroed and flagged in `valid`.
Rotated rotate_about_center(const GrayImage& img, double angle);

/// Center crop with top-left at (floor(w/2) - floor(size/2), floor(h/2) - floor(size/2)).
GrayImage center_crop(const GrayImage& img, int size);
BinaryMask center_crop(const BinaryMask& mask, int size);

/// Binary PGM (P5, maxval 255) round-trip. Intensities quantize to bytes on
/// write and map back as byte/255 on read.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);

}  // namespace umt::img
