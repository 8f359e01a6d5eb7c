#pragma once

#include <cstdint>
#include <vector>

#include "umt/error.hpp"

namespace umt {

inline constexpr int kPatchSide = 96;
inline constexpr int kPatchPixels = kPatchSide * kPatchSide;

enum class PatchLabel : uint8_t { bonafide = 0, spoof = 1, synthesized_spoof = 2 };

/// 0 means "no material" (bonafide); spoof materials are 1-based indices
/// into the corpus material table.
using MaterialId = uint16_t;

/// A 96x96 normalized patch, the unit that flows through the generator,
/// the classifier and the metrics.
struct AlignedPatch {
  std::vector<float> pixels;  // kPatchPixels values in [0,1]
  PatchLabel label = PatchLabel::bonafide;
  MaterialId material = 0;
  uint32_t source_id = 0;       // originating image
  float rotation_applied = 0.f; // radians passed to the aligner's rotate

  void validate() const {
    require(pixels.size() == size_t(kPatchPixels), Errc::precondition,
            "patch must be 96x96");
    require(label != PatchLabel::synthesized_spoof || material != 0, Errc::precondition,
            "synthesized patches must carry a material");
  }

  bool is_spoof_class() const { return label != PatchLabel::bonafide; }
};

}  // namespace umt
