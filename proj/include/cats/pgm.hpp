#pragma once

#include <filesystem>

#include "cats/grid.hpp"

namespace cats {

// Binary PGM (P5, maxval 255), values quantized round-half-up from [0, 1].
void write_pgm(const Grid& grid, const std::filesystem::path& path);

// Accepts P5 (binary) and P2 (ASCII) with maxval <= 255; values are scaled
// to [0, 1]. Malformed input is rejected with the offending byte offset.
Grid read_pgm(const std::filesystem::path& path);

}  // namespace cats
