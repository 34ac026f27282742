#pragma once

namespace sequoia {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sequoia
