#include "umt/prep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "umt/rng.hpp"

namespace umt::prep {

namespace {
constexpr double kPi = std::numbers::pi;

double wrap_mod_pi(double a) {
  a = std::fmod(a, kPi);
  if (a < 0) a += kPi;
  return a;
}
}  // namespace

void PatchSpec::validate() const {
  require(patches_per_image >= 1, Errc::config, "patches_per_image must be >= 1");
  require(raw_size >= 1 && final_size >= 1, Errc::config, "patch sizes must be >= 1");
  require(double(final_size) * std::numbers::sqrt2 <= double(raw_size), Errc::config,
          "final_size*sqrt(2) must fit in raw_size so rotation never clips the crop");
  require(trim_fraction_per_tail >= 0.0 && trim_fraction_per_tail < 0.5, Errc::config,
          "trim fraction must be in [0, 0.5)");
  require(min_foreground_fraction > 0.0 && min_foreground_fraction <= 1.0, Errc::config,
          "min_foreground_fraction must be in (0, 1]");
  require(max_sampling_attempts >= 1, Errc::config, "max_sampling_attempts must be >= 1");
  require(orient_window >= 3 && orient_stride >= 1, Errc::config,
          "orientation window/stride out of range");
}

img::BinaryMask segment(const img::GrayImage& image, int min_foreground_pixels) {
  require(image.width >= 1 && image.height >= 1, Errc::precondition, "empty image");
  auto [threshold, mask] = img::otsu_threshold(image);
  (void)threshold;
  mask = img::morph(mask, img::MorphOp::close, 3);
  mask = img::morph(mask, img::MorphOp::open, 3);
  mask = img::largest_component(mask);
  if (mask.count_foreground() < size_t(std::max(0, min_foreground_pixels)))
    fail(Errc::empty_foreground, "segmented foreground smaller than one patch window");
  return mask;
}

std::vector<std::pair<int, int>> sample_patch_origins(const img::BinaryMask& mask,
                                                      const PatchSpec& spec, uint64_t seed) {
  spec.validate();
  const int w = mask.width, h = mask.height, ps = spec.raw_size;
  if (w < ps || h < ps)
    fail(Errc::insufficient_foreground, "mask smaller than the patch window");

  // Summed-area table so each window's foreground count is O(1).
  std::vector<int64_t> sat(size_t(w + 1) * (h + 1), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      sat[size_t(y + 1) * (w + 1) + (x + 1)] = int64_t(mask.bits[size_t(y) * w + x]) +
                                               sat[size_t(y) * (w + 1) + (x + 1)] +
                                               sat[size_t(y + 1) * (w + 1) + x] -
                                               sat[size_t(y) * (w + 1) + x];
  auto window_count = [&](int x0, int y0) {
    return sat[size_t(y0 + ps) * (w + 1) + (x0 + ps)] - sat[size_t(y0) * (w + 1) + (x0 + ps)] -
           sat[size_t(y0 + ps) * (w + 1) + x0] + sat[size_t(y0) * (w + 1) + x0];
  };

  const int64_t needed = int64_t(std::ceil(spec.min_foreground_fraction * double(ps) * ps));
  Rng rng(seed);
  std::vector<std::pair<int, int>> origins;
  origins.reserve(spec.patches_per_image);
  int consecutive_rejections = 0;
  while (int(origins.size()) < spec.patches_per_image) {
    const int x0 = int(rng.uniform_int(uint64_t(w - ps + 1)));
    const int y0 = int(rng.uniform_int(uint64_t(h - ps + 1)));
    if (window_count(x0, y0) >= needed) {
      origins.emplace_back(x0, y0);
      consecutive_rejections = 0;
    } else if (++consecutive_rejections >= spec.max_sampling_attempts) {
      fail(Errc::insufficient_foreground,
           "no foreground window found after " + std::to_string(spec.max_sampling_attempts) +
               " consecutive rejections");
    }
  }
  return origins;
}

OrientationField estimate_orientation(const img::GrayImage& patch, int window, int stride) {
  require(window >= 3 && stride >= 1, Errc::precondition, "bad window/stride");
  require(patch.width >= window && patch.height >= window, Errc::precondition,
          "patch smaller than orientation window");

  const int w = patch.width, h = patch.height;
  // 3x3 Sobel over interior pixels; borders contribute nothing.
  std::vector<double> gxx(size_t(w) * h, 0.0), gyy(size_t(w) * h, 0.0), gxy(size_t(w) * h, 0.0);
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      const double gx = (patch.at(x + 1, y - 1) + 2.0 * patch.at(x + 1, y) +
                         patch.at(x + 1, y + 1)) -
                        (patch.at(x - 1, y - 1) + 2.0 * patch.at(x - 1, y) +
                         patch.at(x - 1, y + 1));
      const double gy = (patch.at(x - 1, y + 1) + 2.0 * patch.at(x, y + 1) +
                         patch.at(x + 1, y + 1)) -
                        (patch.at(x - 1, y - 1) + 2.0 * patch.at(x, y - 1) +
                         patch.at(x + 1, y - 1));
      const size_t i = size_t(y) * w + x;
      gxx[i] = gx * gx;
      gyy[i] = gy * gy;
      gxy[i] = gx * gy;
    }
  }

  OrientationField field;
  field.window = window;
  field.stride = stride;
  field.grid_w = (w - window) / stride + 1;
  field.grid_h = (h - window) / stride + 1;
  field.angles.resize(size_t(field.grid_w) * field.grid_h);
  field.coherences.resize(field.angles.size());

  for (int by = 0; by < field.grid_h; ++by) {
    for (int bx = 0; bx < field.grid_w; ++bx) {
      double sxx = 0, syy = 0, sxy = 0;
      const int x0 = bx * stride, y0 = by * stride;
      for (int y = y0; y < y0 + window; ++y)
        for (int x = x0; x < x0 + window; ++x) {
          const size_t i = size_t(y) * w + x;
          sxx += gxx[i];
          syy += gyy[i];
          sxy += gxy[i];
        }
      const size_t b = size_t(by) * field.grid_w + bx;
      const double energy = sxx + syy;
      if (energy <= 0.0) {
        field.angles[b] = 0.0;
        field.coherences[b] = 0.0;
        continue;
      }
      const double two_sxy = 2.0 * sxy;
      const double diff = sxx - syy;
      field.angles[b] = wrap_mod_pi(0.5 * std::atan2(two_sxy, diff) + kPi / 2.0);
      field.coherences[b] = std::sqrt(two_sxy * two_sxy + diff * diff) / energy;
    }
  }
  return field;
}

double orientation_distance(double a, double b) {
  double d = std::fabs(wrap_mod_pi(a) - wrap_mod_pi(b));
  return std::min(d, kPi - d);
}

double trimmed_mean_orientation(const OrientationField& field, double trim_per_tail) {
  require(field.block_count() >= 1, Errc::precondition, "orientation field is empty");
  require(trim_per_tail >= 0.0 && trim_per_tail < 0.5, Errc::precondition,
          "trim fraction must be in [0, 0.5)");
  const size_t n = field.block_count();

  // Doubled-angle medoid: the sample minimizing total circular distance in
  // doubled-angle space; lowest index wins ties.
  size_t medoid = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) {
    double cost = 0.0;
    for (size_t j = 0; j < n; ++j) {
      double d = std::fabs(2.0 * field.angles[i] - 2.0 * field.angles[j]);
      d = std::fmod(d, 2.0 * kPi);
      cost += std::min(d, 2.0 * kPi - d);
    }
    if (cost < best_cost) {
      best_cost = cost;
      medoid = i;
    }
  }
  const double center = field.angles[medoid];

  // Deviations relative to the medoid, mapped into (-pi/2, pi/2].
  std::vector<double> deviations(n);
  for (size_t i = 0; i < n; ++i) {
    double d = wrap_mod_pi(field.angles[i] - center);
    if (d > kPi / 2.0) d -= kPi;
    deviations[i] = d;
  }
  std::sort(deviations.begin(), deviations.end());
  const size_t drop = size_t(std::floor(trim_per_tail * double(n)));
  double sum = 0.0;
  size_t kept = 0;
  for (size_t i = drop; i + drop < n; ++i) {
    sum += deviations[i];
    ++kept;
  }
  require(kept >= 1, Errc::precondition, "trim fraction removed every sample");
  return wrap_mod_pi(center + sum / double(kept));
}

AlignedPatch align_and_crop(const img::GrayImage& raw_patch, const PatchSpec& spec) {
  spec.validate();
  require(raw_patch.width == spec.raw_size && raw_patch.height == spec.raw_size,
          Errc::precondition, "patch must be raw_size x raw_size");

  const OrientationField field =
      estimate_orientation(raw_patch, spec.orient_window, spec.orient_stride);
  const bool flat = std::all_of(field.coherences.begin(), field.coherences.end(),
                                [](double c) { return c <= 0.0; });

  double rotation = 0.0;
  if (!flat) {
    const double mean = trimmed_mean_orientation(field, spec.trim_fraction_per_tail);
    // Image rotation by r maps ridge orientation theta to theta - r, so
    // r = mean - pi/2 sends the dominant direction to vertical. The wrap
    // keeps |rotation| <= pi/2.
    rotation = mean - kPi / 2.0;
    if (rotation > kPi / 2.0) rotation -= kPi;
    if (rotation <= -kPi / 2.0) rotation += kPi;
  }

  AlignedPatch out;
  out.rotation_applied = float(rotation);
  if (rotation == 0.0) {
    const img::GrayImage cropped = img::center_crop(raw_patch, spec.final_size);
    out.pixels = cropped.data;
  } else {
    const img::Rotated rotated = img::rotate_about_center(raw_patch, rotation);
    const img::GrayImage cropped = img::center_crop(rotated.image, spec.final_size);
    out.pixels = cropped.data;
  }
  require(int(out.pixels.size()) == spec.final_size * spec.final_size, Errc::shape,
          "crop produced wrong size");
  return out;
}

}  // namespace umt::prep
