#pragma once

namespace sqh {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sqh
