#pragma once

// Independent oracles shared by unit tests and the acceptance suite.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "umt/image.hpp"

namespace umt::testsup {

/// Exhaustive 256-threshold Otsu sweep with exact per-candidate integer
/// sums; lowest maximizer wins.
inline int otsu_oracle(const img::GrayImage& image) {
  int64_t hist[256] = {0};
  for (float v : image.data) hist[img::intensity_bin(v)]++;
  const int64_t total = int64_t(image.pixel_count());
  int64_t weighted_total = 0;
  for (int i = 0; i < 256; ++i) weighted_total += int64_t(i) * hist[i];
  int best_t = -1;
  long double best_v = -1.0L;
  for (int t = 0; t < 256; ++t) {
    int64_t w0 = 0, s0 = 0;
    for (int i = 0; i <= t; ++i) {
      w0 += hist[i];
      s0 += int64_t(i) * hist[i];
    }
    const int64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const __int128 a = __int128(s0) * w1 - __int128(weighted_total - s0) * w0;
    const long double v =
        (long double)(a) * (long double)(a) / ((long double)(w0) * (long double)(w1));
    if (v > best_v) {
      best_v = v;
      best_t = t;
    }
  }
  return best_t;
}

/// Exhaustive threshold sweep maximizing TDR subject to FDR <= fdr with
/// strictly-greater comparisons.
inline double tdr_sweep_oracle(const std::vector<double>& bona, const std::vector<double>& spoof,
                               double fdr) {
  std::vector<double> candidates = bona;
  candidates.insert(candidates.end(), spoof.begin(), spoof.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best = 0.0;
  for (double tau : candidates) {
    size_t fd = 0;
    for (double b : bona)
      if (b > tau) ++fd;
    if (double(fd) > fdr * double(bona.size())) continue;
    size_t td = 0;
    for (double s : spoof)
      if (s > tau) ++td;
    best = std::max(best, double(td) / double(spoof.size()));
  }
  return best;
}

}  // namespace umt::testsup
