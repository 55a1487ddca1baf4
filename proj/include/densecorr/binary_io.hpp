#pragma once

// Little-endian scalar encoding and atomic file replacement.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace densecorr::io {

void put_u32(std::ostream& out, std::uint32_t v);
void put_i16(std::ostream& out, std::int16_t v);
void put_f32(std::ostream& out, float v);
void put_f64(std::ostream& out, double v);

// The readers return false on short reads and leave `v` untouched.
bool get_u32(std::istream& in, std::uint32_t& v);
bool get_i16(std::istream& in, std::int16_t& v);
bool get_f32(std::istream& in, float& v);
bool get_f64(std::istream& in, double& v);

/// Writes `contents` to a sibling temp file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace densecorr::io
