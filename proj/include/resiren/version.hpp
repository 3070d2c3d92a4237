#pragma once

namespace resiren {

inline constexpr const char* kVersion = "0.1.0";

// On-disk format versions. Bump on any layout change; loaders reject mismatches.
inline constexpr unsigned kCheckpointFormatVersion = 1;
inline constexpr unsigned kGridFormatVersion = 1;

} // namespace resiren
