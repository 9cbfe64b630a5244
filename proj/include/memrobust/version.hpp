#pragma once

namespace memrobust {

inline constexpr const char* kVersion = "0.1.0";

} // namespace memrobust
