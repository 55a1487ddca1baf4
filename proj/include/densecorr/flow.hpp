#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "densecorr/feature_grid.hpp"
#include "densecorr/image.hpp"
#include "densecorr/keypoints.hpp"

namespace densecorr {

/// Integer displacement in grid cells.
struct Displacement {
  int dy = 0;
  int dx = 0;

  friend auto operator<=>(const Displacement&, const Displacement&) = default;
};

/// Per-cell displacement from a source grid into a target grid.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width, int label_radius);

  int height() const { return height_; }
  int width() const { return width_; }
  int label_radius() const { return label_radius_; }

  Displacement& at(Cell c) { return w_[index(c)]; }
  const Displacement& at(Cell c) const { return w_[index(c)]; }
  std::span<const Displacement> displacements() const { return w_; }

  /// Every |w|_inf <= label_radius and every p + w(p) inside the grid.
  bool valid() const;

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row) * width_ + c.col; }

  int height_ = 0;
  int width_ = 0;
  int label_radius_ = 0;
  std::vector<Displacement> w_;
};

struct FlowConfig {
  double beta = 3e-3;
  int label_radius = 8;
  int bp_iterations = 50;
  double damping = 0.5;
  int threads = 1;

  void validate() const;
};

/// E = data + beta * smoothness. Smoothness is the deformation energy: the
/// sum of |w(p) - w(q)|^2 over 4-neighbor edges, each edge once, without beta.
struct EnergyBreakdown {
  double data_term = 0.0;
  double smoothness_term = 0.0;
  double total = 0.0;
};

struct Alignment {
  FlowField flow;
  EnergyBreakdown energy;
};

/// Data term sum_p |f_s(p) - f_t(p + w(p))|_2 (not squared) plus the
/// smoothness term above.
EnergyBreakdown flow_energy(const FeatureGrid& src, const FeatureGrid& tgt, const FlowField& flow, double beta);

/// Min-sum loopy BP on the 4-connected grid. Labels of cell p are the
/// displacements with |w|_inf <= label_radius and p + w inside the grid.
/// Messages are distance transforms with weight beta, updated synchronously
/// with damping. Decoding takes each cell's minimum-belief label (ties: the
/// smallest |w|, then lexicographic (dy, dx)). If the decoded flow is worse
/// than the zero flow, the zero flow is returned.
Alignment bp_align(const FeatureGrid& src, const FeatureGrid& tgt, const FlowConfig& config);

/// Indices into `results` sorted by ascending smoothness_term (stable).
std::vector<std::size_t> rank_by_deformation(std::span<const Alignment> results);

/// Pixel displacement at `pixel`: the cell flow scaled by the stride and
/// bilinearly interpolated between rf centers (clamped at the border).
Point pixel_flow(const FlowField& flow, const GridGeometry& geometry, Point pixel);

/// Target image resampled into the source frame:
/// out(x) = target(x + w_px(x)), bicubic, edge-clamped. The output has the
/// target's size.
Image warp_image(const Image& target, const FlowField& flow, const GridGeometry& geometry);

/// Moves each keypoint x to x + w_px(x). Visibility is preserved.
KeypointSet transfer_keypoints(const KeypointSet& keypoints, const FlowField& flow, const GridGeometry& geometry);

/// Coordinate-wise median per keypoint name over the first `top_n` sets in
/// which that keypoint is visible. Even counts average the middle pair.
/// Names visible nowhere come out invisible. The image id and bbox are taken
/// from the first set.
KeypointSet aggregate_median(std::span<const KeypointSet> predictions, std::size_t top_n = 5);

class FlowFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// DCFW container: "DCFW", u32 version = 1, u32 h, w, label_radius, then h*w
/// (i16 dy, i16 dx) pairs, then f64 data, smoothness, total. Little-endian.
std::string encode_flow(const Alignment& alignment);
Alignment decode_flow(const std::string& bytes);
void write_flow(const Alignment& alignment, const std::filesystem::path& path);
Alignment read_flow(const std::filesystem::path& path);

}  // namespace densecorr
