#pragma once

namespace riskswitch {

inline constexpr const char* kToolName = "riskswitch";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace riskswitch
