#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "densecorr/geometry.hpp"

namespace densecorr {

/// Dense H x W lattice of D-dimensional descriptors, row-major with the
/// descriptor innermost.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(int height, int width, int dim, GridGeometry geometry, std::string source_id = {});
  FeatureGrid(int height, int width, int dim, GridGeometry geometry, std::vector<float> data,
              std::string source_id = {});

  int height() const { return height_; }
  int width() const { return width_; }
  int dim() const { return dim_; }
  const GridGeometry& geometry() const { return geometry_; }
  const std::string& source_id() const { return source_id_; }
  void set_source_id(std::string id) { source_id_ = std::move(id); }

  bool contains(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < height_ && c.col < width_; }

  std::span<const float> at(Cell c) const {
    return {data_.data() + offset(c), static_cast<std::size_t>(dim_)};
  }
  std::span<float> at(Cell c) { return {data_.data() + offset(c), static_cast<std::size_t>(dim_)}; }

  std::span<const float> data() const { return data_; }

  friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;

 private:
  std::size_t offset(Cell c) const {
    return (static_cast<std::size_t>(c.row) * width_ + c.col) * dim_;
  }

  int height_ = 0;
  int width_ = 0;
  int dim_ = 0;
  GridGeometry geometry_;
  std::vector<float> data_;
  std::string source_id_;
};

class GridFileError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, bad_version, dimension_overflow, bad_geometry, truncated, non_finite };

  GridFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// DCFG container: "DCFG", u32 version = 1, u32 h, w, d, stride, rf_size,
/// f64 center_offset, then h*w*d f32. All little-endian.
void write_grid(const FeatureGrid& grid, const std::filesystem::path& path);
std::string encode_grid(const FeatureGrid& grid);

/// The source id of the returned grid is the file stem.
FeatureGrid read_grid(const std::filesystem::path& path);
FeatureGrid decode_grid(const std::string& bytes, std::string source_id = {});

}  // namespace densecorr
