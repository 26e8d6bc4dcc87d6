#pragma once

namespace fairproj {
inline constexpr const char* kVersion = "0.3.0";
}
