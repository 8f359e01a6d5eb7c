#pragma once

#include <vector>

#include "umt/error.hpp"

namespace umt::metrics {

struct TdrResult {
  double tdr = 0.0;        // fraction of spoof scores strictly above threshold
  double threshold = 0.0;  // (kmax+1)-th largest bonafide score
};

/// True detection rate at a capped false detection rate. kmax =
/// floor(fdr * |bonafide|) false detections are allowed; the threshold is
/// the (kmax+1)-th largest bonafide score and spoofs must strictly exceed
/// it. Deterministic under ties; achieved FDR <= fdr by construction.
TdrResult tdr_at_fdr(const std::vector<double>& bonafide_scores,
                     const std::vector<double>& spoof_scores, double fdr);

}  // namespace umt::metrics
