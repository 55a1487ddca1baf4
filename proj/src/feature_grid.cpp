#include "densecorr/feature_grid.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "densecorr/binary_io.hpp"

namespace densecorr {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'F', 'G'};
constexpr std::uint32_t kVersion = 1;
// Keeps h*w*d addressable and the allocation sane on a desk machine.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

std::size_t checked_size(int h, int w, int d) {
  if (h < 0 || w < 0 || d < 0) throw InvalidArgument("negative grid dimension");
  return static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(d);
}

}  // namespace

FeatureGrid::FeatureGrid(int height, int width, int dim, GridGeometry geometry, std::string source_id)
    : FeatureGrid(height, width, dim, geometry, std::vector<float>(checked_size(height, width, dim), 0.0f),
                  std::move(source_id)) {}

FeatureGrid::FeatureGrid(int height, int width, int dim, GridGeometry geometry, std::vector<float> data,
                         std::string source_id)
    : height_(height), width_(width), dim_(dim), geometry_(geometry), data_(std::move(data)),
      source_id_(std::move(source_id)) {
  if (data_.size() != checked_size(height, width, dim))
    throw InvalidArgument("feature grid data length does not match h*w*d");
  for (float v : data_)
    if (!std::isfinite(v)) throw InvalidArgument("feature grid values must be finite");
}

std::string encode_grid(const FeatureGrid& grid) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  io::put_u32(out, kVersion);
  io::put_u32(out, static_cast<std::uint32_t>(grid.height()));
  io::put_u32(out, static_cast<std::uint32_t>(grid.width()));
  io::put_u32(out, static_cast<std::uint32_t>(grid.dim()));
  io::put_u32(out, static_cast<std::uint32_t>(grid.geometry().stride));
  io::put_u32(out, static_cast<std::uint32_t>(grid.geometry().rf_size));
  io::put_f64(out, grid.geometry().center_offset());
  for (float v : grid.data()) io::put_f32(out, v);
  return out.str();
}

void write_grid(const FeatureGrid& grid, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_grid(grid));
}

FeatureGrid decode_grid(const std::string& bytes, std::string source_id) {
  using Kind = GridFileError::Kind;
  std::istringstream in(bytes, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kMagic, 4))
    throw GridFileError(Kind::bad_magic, "not a DCFG feature grid");
  std::uint32_t version, h, w, d, stride, rf;
  double offset;
  if (!io::get_u32(in, version)) throw GridFileError(Kind::truncated, "truncated DCFG header");
  if (version != kVersion) throw GridFileError(Kind::bad_version, "unsupported DCFG version " + std::to_string(version));
  if (!io::get_u32(in, h) || !io::get_u32(in, w) || !io::get_u32(in, d) || !io::get_u32(in, stride) ||
      !io::get_u32(in, rf) || !io::get_f64(in, offset))
    throw GridFileError(Kind::truncated, "truncated DCFG header");

  constexpr auto kIntMax = static_cast<std::uint32_t>(std::numeric_limits<int>::max());
  const std::uint64_t count = std::uint64_t{h} * w * d;
  if (h > kIntMax || w > kIntMax || d > kIntMax || (h && w && d && count / h / w != d) || count > kMaxElements)
    throw GridFileError(Kind::dimension_overflow, "DCFG dimensions overflow");
  if (stride < 1 || rf < 1 || stride > kIntMax || rf > kIntMax)
    throw GridFileError(Kind::bad_geometry, "DCFG geometry needs stride >= 1 and rf_size >= 1");

  GridGeometry geometry;
  try {
    geometry = GridGeometry::from_offset(static_cast<int>(stride), static_cast<int>(rf), offset);
  } catch (const InvalidArgument& e) {
    throw GridFileError(Kind::bad_geometry, e.what());
  }

  const std::size_t payload = bytes.size() - static_cast<std::size_t>(in.tellg());
  if (payload < count * 4) throw GridFileError(Kind::truncated, "DCFG payload shorter than h*w*d floats");

  std::vector<float> data(count);
  for (auto& v : data) {
    io::get_f32(in, v);
    if (!std::isfinite(v)) throw GridFileError(Kind::non_finite, "DCFG payload contains a non-finite value");
  }
  return FeatureGrid(static_cast<int>(h), static_cast<int>(w), static_cast<int>(d), geometry, std::move(data),
                     std::move(source_id));
}

FeatureGrid read_grid(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = io::read_file(path);
  } catch (const std::runtime_error& e) {
    throw GridFileError(GridFileError::Kind::io, e.what());
  }
  return decode_grid(bytes, path.stem().string());
}

}  // namespace densecorr
