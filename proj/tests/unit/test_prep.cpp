#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "umt/prep.hpp"
#include "umt/rng.hpp"

using namespace umt;
using img::BinaryMask;
using img::GrayImage;

namespace {

constexpr double kPi = std::numbers::pi;

// Ridge pattern with orientation theta (direction of the ridges mod pi).
GrayImage ridge_patch(int size, double theta, double period = 10.0) {
  GrayImage im(size, size);
  const double gx = std::cos(theta + kPi / 2.0), gy = std::sin(theta + kPi / 2.0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      im.at(x, y) = float(0.5 + 0.5 * std::sin(2.0 * kPi * (x * gx + y * gy) / period));
  return im;
}

}  // namespace

TEST_CASE("segment keeps a dark blob on a white background") {
  const int s = 300;
  GrayImage im(s, s, 1.0f);
  Rng rng(2);
  // dark ridged disk centered at (150,150), radius 130
  size_t blob_pixels = 0;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const double d = std::hypot(x - 150, y - 150);
      if (d < 130) {
        im.at(x, y) = float(0.25 + 0.25 * std::sin(x / 3.0) + 0.05 * rng.uniform());
        ++blob_pixels;
      }
    }
  const BinaryMask mask = prep::segment(im, 150 * 150);
  // mask covers >= 99% of the blob interior
  size_t covered = 0, truth = 0;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      if (std::hypot(x - 150, y - 150) < 124) {  // interior, clear of the fade border
        ++truth;
        if (mask.at(x, y)) ++covered;
      }
    }
  CHECK(double(covered) / double(truth) >= 0.99);
}

TEST_CASE("segment of a uniform image fails as degenerate or empty") {
  GrayImage white(200, 200, 1.0f);
  CHECK_THROWS_AS(prep::segment(white), Error);
}

TEST_CASE("segment keeps only the larger of two blobs") {
  GrayImage im(400, 220, 1.0f);
  auto stamp = [&](int cx, int cy, int r) {
    for (int y = cy - r; y <= cy + r; ++y)
      for (int x = cx - r; x <= cx + r; ++x)
        if (std::hypot(x - cx, y - cy) < r) im.at(x, y) = 0.2f;
  };
  stamp(100, 110, 90);
  stamp(300, 110, 50);
  const BinaryMask mask = prep::segment(im, 100);
  CHECK(mask.at(100, 110));
  CHECK_FALSE(mask.at(300, 110));
}

TEST_CASE("sample_patch_origins fills a full mask and stays in bounds") {
  BinaryMask full(450, 450, true);
  prep::PatchSpec spec;
  const auto origins = prep::sample_patch_origins(full, spec, 99);
  CHECK(int(origins.size()) == spec.patches_per_image);
  for (const auto& [x, y] : origins) {
    CHECK(x >= 0);
    CHECK(y >= 0);
    CHECK(x + spec.raw_size <= 450);
    CHECK(y + spec.raw_size <= 450);
  }
}

TEST_CASE("sample_patch_origins rejects an empty mask") {
  BinaryMask empty(450, 450);
  prep::PatchSpec spec;
  try {
    prep::sample_patch_origins(empty, spec, 1);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::insufficient_foreground);
  }
}

TEST_CASE("sample_patch_origins is deterministic per seed") {
  Rng rng(4);
  BinaryMask mask(450, 450);
  for (int y = 0; y < 450; ++y)
    for (int x = 0; x < 450; ++x)
      mask.set(x, y, std::hypot(x - 225, y - 225) < 200);
  prep::PatchSpec spec;
  const auto a = prep::sample_patch_origins(mask, spec, 1234);
  const auto b = prep::sample_patch_origins(mask, spec, 1234);
  const auto c = prep::sample_patch_origins(mask, spec, 1235);
  CHECK(a == b);
  CHECK(a != c);
  // every accepted window satisfies the foreground constraint
  for (const auto& [x0, y0] : a) {
    size_t fg = 0;
    for (int y = y0; y < y0 + spec.raw_size; ++y)
      for (int x = x0; x < x0 + spec.raw_size; ++x) fg += mask.at(x, y);
    CHECK(double(fg) >= spec.min_foreground_fraction * spec.raw_size * spec.raw_size);
  }
}

TEST_CASE("vertical ridges estimate to pi/2 in every block") {
  const GrayImage patch = ridge_patch(150, kPi / 2.0);
  const auto field = prep::estimate_orientation(patch, 64, 32);
  CHECK(field.grid_w == 3);
  CHECK(field.grid_h == 3);
  for (size_t b = 0; b < field.block_count(); ++b) {
    CHECK(prep::orientation_distance(field.angles[b], kPi / 2.0) < 0.035);
    CHECK(field.coherences[b] > 0.9);
  }
}

TEST_CASE("constant patches have zero coherence everywhere") {
  GrayImage flat(96, 96, 0.42f);
  const auto field = prep::estimate_orientation(flat, 64, 32);
  for (double c : field.coherences) CHECK(c == 0.0);
}

TEST_CASE("rotating the sinusoid by 30 degrees shifts the estimate accordingly") {
  const GrayImage patch = ridge_patch(150, kPi / 2.0);
  const auto rotated = img::rotate_about_center(patch, 30.0 * kPi / 180.0);
  const auto field = prep::estimate_orientation(rotated.image, 64, 32);
  const double expected = kPi / 2.0 - 30.0 * kPi / 180.0;
  for (size_t b = 0; b < field.block_count(); ++b)
    CHECK(prep::orientation_distance(field.angles[b], expected) < 0.06);
}

TEST_CASE("orientation error stays under 2 degrees median across 36 angles") {
  std::vector<double> errors;
  for (int k = 0; k < 36; ++k) {
    const double theta = k * kPi / 36.0;
    const GrayImage patch = ridge_patch(150, theta);
    const auto field = prep::estimate_orientation(patch, 64, 32);
    const double mean = prep::trimmed_mean_orientation(field, 0.10);
    errors.push_back(prep::orientation_distance(mean, theta) * 180.0 / kPi);
  }
  std::sort(errors.begin(), errors.end());
  CHECK(errors[18] <= 2.0);
}

TEST_CASE("trimmed mean of a constant field is that constant") {
  prep::OrientationField field;
  field.window = 64;
  field.stride = 32;
  field.grid_w = 3;
  field.grid_h = 1;
  field.angles = {0.52, 0.52, 0.52};
  field.coherences = {1, 1, 1};
  CHECK(prep::trimmed_mean_orientation(field, 0.10) == doctest::Approx(0.52));
}

TEST_CASE("trimmed mean drops one outlier per tail") {
  prep::OrientationField field;
  field.grid_w = 5;
  field.grid_h = 1;
  field.angles = {0.0, 0.0, 0.0, 0.0, 1.396};
  field.coherences = {1, 1, 1, 1, 1};
  // floor(0.2*5)=1 dropped per tail leaves {0,0,0}
  CHECK(prep::trimmed_mean_orientation(field, 0.2) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("trimmed mean recenters across the wraparound") {
  prep::OrientationField field;
  field.grid_w = 2;
  field.grid_h = 1;
  field.angles = {0.01, kPi - 0.01};
  field.coherences = {1, 1};
  const double mean = prep::trimmed_mean_orientation(field, 0.2);
  CHECK(prep::orientation_distance(mean, 0.0) < 0.02);
}

TEST_CASE("align_and_crop leaves vertical ridges nearly unrotated") {
  const GrayImage patch = ridge_patch(150, kPi / 2.0);
  prep::PatchSpec spec;
  const AlignedPatch aligned = prep::align_and_crop(patch, spec);
  CHECK(std::fabs(aligned.rotation_applied) < 0.05);
  CHECK(aligned.pixels.size() == size_t(96) * 96);
}

TEST_CASE("align_and_crop sends a 20-degree tilt back to vertical") {
  const GrayImage patch = ridge_patch(150, kPi / 2.0 - 20.0 * kPi / 180.0);
  prep::PatchSpec spec;
  const AlignedPatch aligned = prep::align_and_crop(patch, spec);

  GrayImage result(96, 96);
  std::copy(aligned.pixels.begin(), aligned.pixels.end(), result.data.begin());
  const auto field = prep::estimate_orientation(result, 64, 32);
  const double re_estimate = prep::trimmed_mean_orientation(field, spec.trim_fraction_per_tail);
  CHECK(prep::orientation_distance(re_estimate, kPi / 2.0) < 0.05);
}

TEST_CASE("align_and_crop passes a constant patch through unrotated") {
  GrayImage flat(150, 150, 0.6f);
  prep::PatchSpec spec;
  const AlignedPatch aligned = prep::align_and_crop(flat, spec);
  CHECK(aligned.rotation_applied == 0.f);
  for (float v : aligned.pixels) CHECK(v == doctest::Approx(0.6f));
}

TEST_CASE("alignment is idempotent within 0.06 rad") {
  for (double theta : {0.3, 1.1, 2.4, 2.9}) {
    const GrayImage patch = ridge_patch(150, theta);
    prep::PatchSpec spec;
    const AlignedPatch once = prep::align_and_crop(patch, spec);

    GrayImage aligned_img(96, 96);
    std::copy(once.pixels.begin(), once.pixels.end(), aligned_img.data.begin());
    prep::PatchSpec again;
    again.raw_size = 96;
    again.final_size = 64;
    const AlignedPatch twice = prep::align_and_crop(aligned_img, again);
    CHECK(std::fabs(twice.rotation_applied) < 0.06);
  }
}
