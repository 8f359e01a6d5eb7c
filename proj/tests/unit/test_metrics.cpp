#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "umt/metrics.hpp"
#include "umt/rng.hpp"

using namespace umt;

namespace {

// Exhaustive threshold sweep: maximize TDR subject to FDR <= fdr, with
// strictly-greater comparisons. Candidates are all distinct scores.
double tdr_sweep_oracle(const std::vector<double>& bona, const std::vector<double>& spoof,
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

}  // namespace

TEST_CASE("worked example: kmax=1 picks the second-largest bonafide score") {
  const std::vector<double> bona{0.4, 0.3, 0.2, 0.1};
  const std::vector<double> spoof{0.35, 0.5, 0.05};
  const auto r = metrics::tdr_at_fdr(bona, spoof, 0.25);
  CHECK(r.threshold == doctest::Approx(0.3));
  CHECK(r.tdr == doctest::Approx(2.0 / 3.0));
  CHECK(r.tdr == doctest::Approx(tdr_sweep_oracle(bona, spoof, 0.25)));
}

TEST_CASE("perfect separation reaches TDR 1 at any fdr") {
  const std::vector<double> bona{0.1, 0.2, 0.3};
  const std::vector<double> spoof{0.9, 0.8, 0.95};
  for (double fdr : {0.001, 0.1, 0.5})
    CHECK(metrics::tdr_at_fdr(bona, spoof, fdr).tdr == doctest::Approx(1.0));
}

TEST_CASE("kmax = 0 forces spoofs to exceed every bonafide score") {
  const std::vector<double> bona{0.5, 0.4, 0.6};
  const std::vector<double> spoof{0.61, 0.6, 0.55};
  const auto r = metrics::tdr_at_fdr(bona, spoof, 0.01);
  CHECK(r.threshold == doctest::Approx(0.6));
  CHECK(r.tdr == doctest::Approx(1.0 / 3.0));  // only 0.61 strictly exceeds
}

TEST_CASE("empty score lists are rejected") {
  CHECK_THROWS_AS(metrics::tdr_at_fdr({}, {0.5}, 0.1), Error);
  CHECK_THROWS_AS(metrics::tdr_at_fdr({0.5}, {}, 0.1), Error);
}

TEST_CASE("matches the sweep oracle on 1000 random score sets with ties") {
  Rng rng(71);
  for (int rep = 0; rep < 1000; ++rep) {
    const size_t nb = 10 + rng.uniform_int(491);
    const size_t ns = 10 + rng.uniform_int(491);
    // quantize to few levels so ties are common
    const double levels = 4 + double(rng.uniform_int(28));
    std::vector<double> bona(nb), spoof(ns);
    for (auto& v : bona) v = std::round(rng.uniform() * levels) / levels;
    for (auto& v : spoof) v = std::round(rng.uniform(0.2, 1.2) * levels) / levels;
    const double fdr = 0.002 + 0.3 * rng.uniform();
    const auto r = metrics::tdr_at_fdr(bona, spoof, fdr);
    CHECK(r.tdr == doctest::Approx(tdr_sweep_oracle(bona, spoof, fdr)));
    // achieved FDR stays within the cap
    size_t fd = 0;
    for (double b : bona)
      if (b > r.threshold) ++fd;
    CHECK(double(fd) <= fdr * double(nb));
  }
}

TEST_CASE("invariant under strictly increasing transforms") {
  Rng rng(73);
  std::vector<double> bona(40), spoof(60);
  for (auto& v : bona) v = rng.uniform();
  for (auto& v : spoof) v = rng.uniform(0.1, 1.1);
  const double base = metrics::tdr_at_fdr(bona, spoof, 0.05).tdr;
  auto warp = [](double v) { return std::tanh(2.0 * v) + v * v * 0.1; };
  for (auto& v : bona) v = warp(v);
  for (auto& v : spoof) v = warp(v);
  CHECK(metrics::tdr_at_fdr(bona, spoof, 0.05).tdr == doctest::Approx(base));
}
