#pragma once

// Receptive-field arithmetic for stacks of strided, padded layers.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "densecorr/types.hpp"

namespace densecorr {

struct LayerSpec {
  int kernel = 1;
  int stride = 1;
  int pad = 0;
};

struct NamedLayer {
  std::string name;
  LayerSpec spec;
};

/// Maps grid cells to input pixels. The rf center of cell (i, j) is
/// (x, y) = center_offset + (j, i) * stride.
///
/// The offset is held in half pixels: for even kernels (k - 1) / 2 is
/// fractional, and every offset reachable by composition is a multiple of 1/2.
struct GridGeometry {
  int stride = 1;
  int rf_size = 1;
  std::int64_t center_offset_x2 = 0;

  double center_offset() const { return static_cast<double>(center_offset_x2) / 2.0; }

  /// Throws InvalidArgument unless `offset` is a finite multiple of 1/2.
  static GridGeometry from_offset(int stride, int rf_size, double offset);

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

struct PixelRect {
  int x0 = 0;  // inclusive
  int y0 = 0;
  int x1 = 0;  // exclusive
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Cumulative geometry of `layers`, starting from the identity (1, 1, 0).
GridGeometry compose_geometry(std::span<const LayerSpec> layers);

/// Appends one layer to an existing geometry.
GridGeometry compose_geometry(const GridGeometry& base, const LayerSpec& layer);

Point rf_center(const GridGeometry& geometry, Cell cell);

/// In-bounds cell whose rf center is closest to `pixel`; ties go to the
/// smaller row, then the smaller column. Pixels off the grid clamp to the
/// border.
Cell nearest_cell(const GridGeometry& geometry, int rows, int cols, Point pixel);

/// Stride-sized square centered at the cell's rf center; fractional corners
/// are rounded toward the origin.
PixelRect center_patch_rect(const GridGeometry& geometry, Cell cell);

/// Square of side rf_size centered at the rf center, rounded like
/// center_patch_rect.
PixelRect rf_rect(const GridGeometry& geometry, Cell cell);

/// Parses `name kernel stride pad` lines; `#` starts a comment.
std::vector<NamedLayer> parse_architecture(const std::string& text);
std::vector<NamedLayer> read_architecture(const std::filesystem::path& path);

/// Geometry after the layer called `name`. Throws InvalidArgument if absent.
GridGeometry geometry_at(std::span<const NamedLayer> layers, const std::string& name);

/// conv1..pool5 of the reference ImageNet network. Response normalization
/// layers do not change geometry and are left out.
std::vector<NamedLayer> reference_architecture();

}  // namespace densecorr
