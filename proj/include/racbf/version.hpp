#pragma once

namespace racbf {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace racbf
