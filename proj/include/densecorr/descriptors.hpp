#pragma once

#include <span>
#include <vector>

#include "densecorr/feature_grid.hpp"
#include "densecorr/image.hpp"

namespace densecorr {

/// Upright gradient-orientation histogram in the style of dense SIFT.
struct DenseDescriptorConfig {
  int grid_stride = 8;
  int radius = 8;  // half-width of the square support
  int spatial_bins = 4;
  int orientation_bins = 8;

  int dim() const { return spatial_bins * spatial_bins * orientation_bins; }
  void validate() const;
};

/// Descriptor of the (2 * radius + 1)^2 support centered at pixel (cx, cy) of
/// a grayscale image. Gradients are central differences with edge clamping.
/// Magnitudes are bilinearly binned in space and orientation (bin k centered
/// at angle 2*pi*k / orientation_bins) and the result is L2-normalized.
std::vector<float> describe_point(const Image& gray, int cx, int cy, const DenseDescriptorConfig& config);

/// Descriptors on a lattice of rf centers radius + k * grid_stride that keep
/// the full support inside the image. Color input is converted to luma.
FeatureGrid dense_descriptors(const Image& image, const DenseDescriptorConfig& config);

/// Whole-image descriptor: the grid flattened in row-major order and
/// L2-normalized. Used for retrieval when no external global feature exists.
std::vector<float> global_descriptor(const FeatureGrid& grid);

}  // namespace densecorr
