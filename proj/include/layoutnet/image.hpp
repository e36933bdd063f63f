#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "layoutnet/types.hpp"

namespace layoutnet {

/// round(255 v) with halves rounded up; values clamped to [0, 1] first.
std::uint8_t to_byte(double v);

/// Binary 8-bit PGM (P5).
void write_pgm(const std::filesystem::path& path, const Grid& grid);
/// Values come back as byte / 255.
Grid read_pgm(const std::filesystem::path& path);

}  // namespace layoutnet
