#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "umt/image.hpp"
#include "umt/patch.hpp"

namespace umt::prep {

/// Blockwise ridge orientations (radians in [0, pi)) with per-block
/// coherence in [0,1]. Grid dimensions follow floor((extent - window)/stride) + 1.
struct OrientationField {
  int window = 0;
  int stride = 0;
  int grid_w = 0;
  int grid_h = 0;
  std::vector<double> angles;      // grid_w * grid_h, row-major
  std::vector<double> coherences;  // same layout

  size_t block_count() const { return angles.size(); }
};

/// Patch extraction parameters. Defaults follow the 30x150->96 protocol.
struct PatchSpec {
  int patches_per_image = 30;
  int raw_size = 150;
  int final_size = 96;
  double min_foreground_fraction = 0.95;
  double trim_fraction_per_tail = 0.10;
  int max_sampling_attempts = 1000;
  int orient_window = 64;
  int orient_stride = 32;

  void validate() const;
};

/// Full segmentation pipeline: Otsu -> close(3) -> open(3) -> largest
/// component. Throws EmptyForeground when fewer than `min_foreground_pixels`
/// survive (callers pass raw_size^2 so at least one patch window can fit).
img::BinaryMask segment(const img::GrayImage& img, int min_foreground_pixels = 150 * 150);

/// Rejection-samples `patches_per_image` top-left corners of raw_size
/// windows whose foreground fraction meets the spec. Deterministic per
/// seed; throws InsufficientForeground after max_sampling_attempts
/// consecutive rejections.
std::vector<std::pair<int, int>> sample_patch_origins(const img::BinaryMask& mask,
                                                      const PatchSpec& spec, uint64_t seed);

/// Gradient structure tensor orientation: theta = 0.5*atan2(sum 2GxGy,
/// sum Gx^2-Gy^2) + pi/2 mod pi with 3x3 Sobel gradients; coherence is the
/// normalized magnitude of the doubled-angle mean vector (0 on flat blocks).
OrientationField estimate_orientation(const img::GrayImage& patch, int window, int stride);

/// Robust average of orientations mod pi: recenters on the doubled-angle
/// medoid, drops floor(trim*n) per tail, averages the rest.
double trimmed_mean_orientation(const OrientationField& field, double trim_per_tail);

/// Rotates the raw patch so the dominant ridge direction becomes vertical
/// and center-crops to final_size. Flat patches pass through unrotated.
AlignedPatch align_and_crop(const img::GrayImage& raw_patch, const PatchSpec& spec);

/// Difference of two orientations mod pi, in [0, pi/2].
double orientation_distance(double a, double b);

}  // namespace umt::prep
