#pragma once

namespace umt {

inline constexpr const char* kToolName = "umt";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace umt
