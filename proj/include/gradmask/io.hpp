#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "gradmask/tensor.hpp"

namespace gradmask {

// GMT1 binary tensor format, little endian throughout:
//   "GMT1" | u8 dtype (0=f32, 1=f64) | u8 rank | rank x u32 extents | payload
// Round trips are bit-exact.
void write_gmt(std::ostream& os, const Tensor& t);
Tensor read_gmt(std::istream& is);

void write_gmt_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_gmt_file(const std::filesystem::path& path);

std::vector<std::uint8_t> gmt_bytes(const Tensor& t);

} // namespace gradmask
