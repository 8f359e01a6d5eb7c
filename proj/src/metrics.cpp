#include "umt/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace umt::metrics {

TdrResult tdr_at_fdr(const std::vector<double>& bonafide_scores,
                     const std::vector<double>& spoof_scores, double fdr) {
  require(!bonafide_scores.empty() && !spoof_scores.empty(), Errc::empty_scores,
          "tdr_at_fdr needs nonempty score lists");
  require(fdr > 0.0 && fdr < 1.0, Errc::precondition, "fdr must be in (0,1)");

  const size_t kmax = size_t(std::floor(fdr * double(bonafide_scores.size())));
  std::vector<double> sorted(bonafide_scores);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  const double threshold = sorted[kmax];  // kmax+1-th largest, kmax < |B| since fdr < 1

  size_t detected = 0;
  for (double s : spoof_scores)
    if (s > threshold) ++detected;

  // Contract check: strict comparison caps false detections at kmax.
  size_t false_detections = 0;
  for (double b : bonafide_scores)
    if (b > threshold) ++false_detections;
  require(false_detections <= kmax, Errc::precondition,
          "threshold rule violated its own FDR cap");

  return {double(detected) / double(spoof_scores.size()), threshold};
}

}  // namespace umt::metrics
