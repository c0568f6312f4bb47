#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "icefuse/gridstore/grid.hpp"

namespace icefuse::grid {

// SICG layout, little-endian:
//   "SICG" | u16 version (1) | u8 dtype (0 = f32, 1 = f64) | u8 reserved (0)
//   | u32 height | u32 width | height*width samples, row-major
// Nodata cells are written as the quiet NaN pattern of the sample type;
// any NaN read back becomes nodata.

enum class SampleType : std::uint8_t { f32 = 0, f64 = 1 };

inline constexpr std::uint16_t kSicgVersion = 1;

void write_grid(const Grid& g, std::ostream& out, SampleType type = SampleType::f64);
void write_grid(const Grid& g, const std::filesystem::path& path, SampleType type = SampleType::f64);

/// Throws FormatError on bad magic/version/dtype/shape or a short payload.
Grid read_grid(std::istream& in);
Grid read_grid(const std::filesystem::path& path);

}  // namespace icefuse::grid
