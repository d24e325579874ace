#pragma once

namespace tcd {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tcd
