#include "umt/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

namespace umt::img {

size_t BinaryMask::count_foreground() const {
  return size_t(std::count(bits.begin(), bits.end(), uint8_t(1)));
}

std::pair<int, BinaryMask> otsu_threshold(const GrayImage& img) {
  require(img.width >= 1 && img.height >= 1, Errc::precondition, "empty image");
  // Counts and intensity sums are exact integers, so the between-class
  // variance ratio a^2 / (w0*w1) ranks identically no matter how the
  // histogram was accumulated; one long-double division per candidate.
  std::array<int64_t, 256> hist{};
  for (float v : img.data) hist[intensity_bin(v)]++;
  const int64_t total = int64_t(img.pixel_count());
  int64_t weighted_total = 0;
  for (int i = 0; i < 256; ++i) weighted_total += int64_t(i) * hist[i];

  const int nonzero =
      int(std::count_if(hist.begin(), hist.end(), [](int64_t h) { return h > 0; }));
  if (nonzero <= 1) fail(Errc::degenerate_image, "constant image has no Otsu split");

  int best_t = -1;
  long double best_v = -1.0L;
  int64_t w0 = 0, s0 = 0;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[t];
    s0 += int64_t(t) * hist[t];
    const int64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const __int128 a = __int128(s0) * w1 - __int128(weighted_total - s0) * w0;
    const long double v = (long double)(a) * (long double)(a) /
                          ((long double)(w0) * (long double)(w1));
    if (v > best_v) {
      best_v = v;
      best_t = t;
    }
  }

  BinaryMask mask(img.width, img.height);
  for (size_t i = 0; i < img.data.size(); ++i)
    mask.bits[i] = intensity_bin(img.data[i]) <= best_t ? 1 : 0;
  return {best_t, mask};
}

namespace {

// Separable 1-D sliding min/max over a (2r+1) window; out-of-bounds is
// background for erode (min) and dilate (max) alike.
BinaryMask morph_primitive(const BinaryMask& mask, bool erode_pass, int radius) {
  const int w = mask.width, h = mask.height;
  BinaryMask horiz(w, h), out(w, h);
  const uint8_t oob = erode_pass ? 0 : 0;  // background either way
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      uint8_t acc = erode_pass ? 1 : 0;
      for (int dx = -radius; dx <= radius; ++dx) {
        const int xx = x + dx;
        const uint8_t v = (xx >= 0 && xx < w) ? mask.bits[size_t(y) * w + xx] : oob;
        if (erode_pass)
          acc = uint8_t(acc & v);
        else
          acc = uint8_t(acc | v);
      }
      horiz.bits[size_t(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      uint8_t acc = erode_pass ? 1 : 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        const uint8_t v = (yy >= 0 && yy < h) ? horiz.bits[size_t(yy) * w + x] : oob;
        if (erode_pass)
          acc = uint8_t(acc & v);
        else
          acc = uint8_t(acc | v);
      }
      out.bits[size_t(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius) {
  require(radius >= 1, Errc::precondition, "morph radius must be >= 1");
  switch (op) {
    case MorphOp::erode:
      return morph_primitive(mask, true, radius);
    case MorphOp::dilate:
      return morph_primitive(mask, false, radius);
    case MorphOp::open:
      return morph(morph(mask, MorphOp::erode, radius), MorphOp::dilate, radius);
    case MorphOp::close:
      return morph(morph(mask, MorphOp::dilate, radius), MorphOp::erode, radius);
  }
  fail(Errc::precondition, "unknown morph op");
}

BinaryMask largest_component(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  BinaryMask out(w, h);
  std::vector<int32_t> label(mask.bits.size(), -1);
  std::vector<size_t> stack;
  int32_t next_label = 0;
  size_t best_size = 0;
  int32_t best_label = -1;

  for (size_t start = 0; start < mask.bits.size(); ++start) {
    if (!mask.bits[start] || label[start] >= 0) continue;
    const int32_t lab = next_label++;
    size_t size = 0;
    stack.push_back(start);
    label[start] = lab;
    while (!stack.empty()) {
      const size_t p = stack.back();
      stack.pop_back();
      ++size;
      const int x = int(p % w), y = int(p / w);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
          const size_t q = size_t(yy) * w + xx;
          if (mask.bits[q] && label[q] < 0) {
            label[q] = lab;
            stack.push_back(q);
          }
        }
      }
    }
    // Components are discovered in order of their lowest pixel index, so
    // keeping the first strictly-larger one realizes the tie-break.
    if (size > best_size) {
      best_size = size;
      best_label = lab;
    }
  }

  if (best_label >= 0)
    for (size_t i = 0; i < label.size(); ++i)
      if (label[i] == best_label) out.bits[i] = 1;
  return out;
}

Rotated rotate_about_center(const GrayImage& img, double angle) {
  const int w = img.width, h = img.height;
  Rotated r{GrayImage(w, h, 0.f), BinaryMask(w, h)};
  const double cx = (w - 1) * 0.5, cy = (h - 1) * 0.5;
  const double c = std::cos(angle), s = std::sin(angle);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse map of the on-screen counterclockwise rotation
      // (x', y') = (c*x + s*y, -s*x + c*y) about the center.
      const double dx = x - cx, dy = y - cy;
      const double sx = c * dx - s * dy + cx;
      const double sy = s * dx + c * dy + cy;
      const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
      if (x0 < 0 || y0 < 0 || x0 + 1 >= w || y0 + 1 >= h) {
        // Accept exact border hits so angle 0 is the identity.
        if (sx >= 0 && sy >= 0 && sx <= w - 1 && sy <= h - 1) {
          const int xi = std::min(x0, w - 1), yi = std::min(y0, h - 1);
          const double fx = sx - xi, fy = sy - yi;
          const int xi1 = std::min(xi + 1, w - 1), yi1 = std::min(yi + 1, h - 1);
          const double v = (1 - fx) * (1 - fy) * img.at(xi, yi) +
                           fx * (1 - fy) * img.at(xi1, yi) +
                           (1 - fx) * fy * img.at(xi, yi1) + fx * fy * img.at(xi1, yi1);
          r.image.at(x, y) = float(v);
          r.valid.set(x, y, true);
        }
        continue;
      }
      const double fx = sx - x0, fy = sy - y0;
      const double v = (1 - fx) * (1 - fy) * img.at(x0, y0) + fx * (1 - fy) * img.at(x0 + 1, y0) +
                       (1 - fx) * fy * img.at(x0, y0 + 1) + fx * fy * img.at(x0 + 1, y0 + 1);
      r.image.at(x, y) = float(v);
      r.valid.set(x, y, true);
    }
  }
  return r;
}

GrayImage center_crop(const GrayImage& img, int size) {
  require(size >= 1 && size <= std::min(img.width, img.height), Errc::precondition,
          "crop size exceeds image");
  const int x0 = img.width / 2 - size / 2;
  const int y0 = img.height / 2 - size / 2;
  GrayImage out(size, size);
  for (int y = 0; y < size; ++y)
    std::copy_n(&img.data[size_t(y0 + y) * img.width + x0], size, &out.data[size_t(y) * size]);
  return out;
}

BinaryMask center_crop(const BinaryMask& mask, int size) {
  require(size >= 1 && size <= std::min(mask.width, mask.height), Errc::precondition,
          "crop size exceeds mask");
  const int x0 = mask.width / 2 - size / 2;
  const int y0 = mask.height / 2 - size / 2;
  BinaryMask out(size, size);
  for (int y = 0; y < size; ++y)
    std::copy_n(&mask.bits[size_t(y0 + y) * mask.width + x0], size, &out.bits[size_t(y) * size]);
  return out;
}

namespace {

int pgm_next_token(std::istream& in, std::string& tok) {
  tok.clear();
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return 1;
      continue;
    }
    tok.push_back(char(ch));
  }
  return tok.empty() ? 0 : 1;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::missing_file, "cannot open " + path.string());
  std::string tok;
  if (!pgm_next_token(in, tok) || tok != "P5")
    fail(Errc::undecodable_image, "not a binary PGM (P5): " + path.string());
  int w = 0, h = 0, maxval = 0;
  try {
    if (!pgm_next_token(in, tok)) throw std::invalid_argument("eof");
    w = std::stoi(tok);
    if (!pgm_next_token(in, tok)) throw std::invalid_argument("eof");
    h = std::stoi(tok);
    if (!pgm_next_token(in, tok)) throw std::invalid_argument("eof");
    maxval = std::stoi(tok);
  } catch (const std::exception&) {
    fail(Errc::undecodable_image, "malformed PGM header: " + path.string());
  }
  if (w < 1 || h < 1) fail(Errc::undecodable_image, "bad PGM dimensions: " + path.string());
  if (maxval != 255) fail(Errc::undecodable_image, "PGM maxval must be 255: " + path.string());
  std::vector<uint8_t> raw(size_t(w) * size_t(h));
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (size_t(in.gcount()) != raw.size())
    fail(Errc::undecodable_image, "truncated PGM data: " + path.string());
  GrayImage img(w, h);
  for (size_t i = 0; i < raw.size(); ++i) img.data[i] = float(raw[i]) / 255.f;
  return img;
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> raw(img.pixel_count());
  for (size_t i = 0; i < raw.size(); ++i) {
    const float v = std::clamp(img.data[i], 0.f, 1.f);
    raw[i] = uint8_t(std::lround(double(v) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) fail(Errc::io, "short write: " + path.string());
}

}  // namespace umt::img
