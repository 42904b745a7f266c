#pragma once

namespace ecgbench::cli {
inline constexpr const char* kVersion = "0.1.0";
}
