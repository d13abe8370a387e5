#pragma once

#include <string>

#include "ncx/grid.hpp"

namespace ncx {

// Binary container: "NCSY", u32 version, then d, N, L as little-endian f64,
// then N^d row-major (re, im) pairs stored as little-endian f32.
void write_ncsy(const std::string& path, const Symbol& f);
Symbol read_ncsy(const std::string& path);

// One row per grid point: t_0, ..., t_{d-1}, re, im.
void write_symbol_csv(const std::string& path, const Symbol& f);

// Write through a temporary file in the same directory and rename, so a
// reader never sees a partially written file.
void atomic_write(const std::string& path, const std::string& bytes);

}  // namespace ncx
