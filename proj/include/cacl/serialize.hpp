#pragma once

// Binary shared-space files. Layout (all integers u32, reals IEEE-754
// binary32, little-endian):
//
//   header    "CACL" | version | L | T                                  16 bytes
//   metadata  input channels, height, width | classes                  16 bytes
//             per layer: c, n, h, w, stride, padding, dropout (f32)     28 L bytes
//             rank table, row per layer, R_{l,1..T}                      4 L T bytes
//   factors   per layer: U (c x R, column by column), sigma (R), V (q x R, column by column)
//   heads     per task: rows d, cols k, weight (row-major d x k), bias (k)

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cacl/factorized.hpp"

namespace cacl {

inline constexpr std::uint32_t kFormatVersion = 1;

std::vector<std::uint8_t> encode_space(const SharedSpace& shared);
// Throws FormatError (with the byte offset) on any malformed input; never
// returns a partially decoded space.
SharedSpace decode_space(std::span<const std::uint8_t> bytes);

// Writes to a sibling temporary file, then renames over `path`.
void save_space(const SharedSpace& shared, const std::string& path);
SharedSpace load_space(const std::string& path);

}  // namespace cacl
