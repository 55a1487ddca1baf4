#include "densecorr/binary_io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace densecorr::io {
namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
bool get_le(std::istream& in, U& v) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) return false;
  U r = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) r |= static_cast<U>(bytes[i]) << (8 * i);
  v = r;
  return true;
}

}  // namespace

void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void put_i16(std::ostream& out, std::int16_t v) { put_le(out, std::bit_cast<std::uint16_t>(v)); }
void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

bool get_u32(std::istream& in, std::uint32_t& v) { return get_le(in, v); }

bool get_i16(std::istream& in, std::int16_t& v) {
  std::uint16_t u;
  if (!get_le(in, u)) return false;
  v = std::bit_cast<std::int16_t>(u);
  return true;
}

bool get_f32(std::istream& in, float& v) {
  std::uint32_t u;
  if (!get_le(in, u)) return false;
  v = std::bit_cast<float>(u);
  return true;
}

bool get_f64(std::istream& in, double& v) {
  std::uint64_t u;
  if (!get_le(in, u)) return false;
  v = std::bit_cast<double>(u);
  return true;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace densecorr::io
