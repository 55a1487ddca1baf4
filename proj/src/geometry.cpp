#include "densecorr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "densecorr/binary_io.hpp"

namespace densecorr {

GridGeometry GridGeometry::from_offset(int stride, int rf_size, double offset) {
  if (stride < 1 || rf_size < 1) throw InvalidArgument("geometry needs stride >= 1 and rf_size >= 1");
  const double twice = offset * 2.0;
  if (!std::isfinite(twice) || twice != std::round(twice))
    throw InvalidArgument("center offset must be a multiple of 1/2");
  return {stride, rf_size, static_cast<std::int64_t>(twice)};
}

GridGeometry compose_geometry(const GridGeometry& base, const LayerSpec& layer) {
  if (layer.kernel < 1 || layer.stride < 1 || layer.pad < 0)
    throw InvalidArgument("layer needs kernel >= 1, stride >= 1, pad >= 0");
  GridGeometry out;
  out.stride = base.stride * layer.stride;
  out.rf_size = base.rf_size + (layer.kernel - 1) * base.stride;
  // 2 * ((k - 1) / 2 - pad) * stride_before, kept integral.
  out.center_offset_x2 =
      base.center_offset_x2 + (static_cast<std::int64_t>(layer.kernel - 1) - 2 * layer.pad) * base.stride;
  return out;
}

GridGeometry compose_geometry(std::span<const LayerSpec> layers) {
  if (layers.empty()) throw InvalidArgument("compose_geometry needs at least one layer");
  GridGeometry g;
  for (const auto& l : layers) g = compose_geometry(g, l);
  return g;
}

Point rf_center(const GridGeometry& geometry, Cell cell) {
  return {geometry.center_offset() + static_cast<double>(cell.col) * geometry.stride,
          geometry.center_offset() + static_cast<double>(cell.row) * geometry.stride};
}

namespace {

// Distance is separable, so the nearest cell is the per-axis nearest index.
int nearest_index(const GridGeometry& g, int count, double coord) {
  const double u = (coord - g.center_offset()) / g.stride;
  int lo = static_cast<int>(std::floor(u));
  // Half-way between two centers goes to the smaller index.
  int best = (u - lo > 0.5) ? lo + 1 : lo;
  return std::clamp(best, 0, count - 1);
}

// floor toward zero of (2 * center - side) / 2.
PixelRect centered_square(const GridGeometry& g, Cell cell, int side) {
  const std::int64_t cx2 = g.center_offset_x2 + 2 * static_cast<std::int64_t>(cell.col) * g.stride;
  const std::int64_t cy2 = g.center_offset_x2 + 2 * static_cast<std::int64_t>(cell.row) * g.stride;
  const int x0 = static_cast<int>((cx2 - side) / 2);
  const int y0 = static_cast<int>((cy2 - side) / 2);
  return {x0, y0, x0 + side, y0 + side};
}

}  // namespace

Cell nearest_cell(const GridGeometry& geometry, int rows, int cols, Point pixel) {
  if (rows < 1 || cols < 1) throw InvalidArgument("nearest_cell on an empty grid");
  return {nearest_index(geometry, rows, pixel.y), nearest_index(geometry, cols, pixel.x)};
}

PixelRect center_patch_rect(const GridGeometry& geometry, Cell cell) {
  return centered_square(geometry, cell, geometry.stride);
}

PixelRect rf_rect(const GridGeometry& geometry, Cell cell) {
  return centered_square(geometry, cell, geometry.rf_size);
}

std::vector<NamedLayer> parse_architecture(const std::string& text) {
  std::vector<NamedLayer> layers;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    NamedLayer layer;
    if (!(fields >> layer.name)) continue;
    if (!(fields >> layer.spec.kernel >> layer.spec.stride >> layer.spec.pad))
      throw InvalidArgument("architecture line " + std::to_string(lineno) + ": expected `name kernel stride pad`");
    std::string extra;
    if (fields >> extra) throw InvalidArgument("architecture line " + std::to_string(lineno) + ": trailing field");
    if (layer.spec.kernel < 1 || layer.spec.stride < 1 || layer.spec.pad < 0)
      throw InvalidArgument("architecture line " + std::to_string(lineno) + ": invalid layer values");
    layers.push_back(std::move(layer));
  }
  return layers;
}

std::vector<NamedLayer> read_architecture(const std::filesystem::path& path) {
  return parse_architecture(io::read_file(path));
}

GridGeometry geometry_at(std::span<const NamedLayer> layers, const std::string& name) {
  GridGeometry g;
  for (const auto& l : layers) {
    g = compose_geometry(g, l.spec);
    if (l.name == name) return g;
  }
  throw InvalidArgument("unknown layer: " + name);
}

std::vector<NamedLayer> reference_architecture() {
  return {
      {"conv1", {11, 4, 0}}, {"pool1", {3, 2, 0}}, {"conv2", {5, 1, 2}}, {"pool2", {3, 2, 0}},
      {"conv3", {3, 1, 1}},  {"conv4", {3, 1, 1}}, {"conv5", {3, 1, 1}}, {"pool5", {3, 2, 0}},
  };
}

}  // namespace densecorr
