#pragma once

namespace awac {

inline constexpr const char* kServiceName = "awac";
inline constexpr const char* kVersion = "0.1.0";

}  // namespace awac
