#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "densecorr/feature_grid.hpp"
#include "densecorr/image.hpp"
#include "densecorr/nn_index.hpp"

namespace densecorr {

/// Features paired with the pixels they were computed from: the stride-sized
/// center patch and, optionally, the full rf crop. Patches leaving the image
/// are edge-replicated.
class PatchDatabase {
 public:
  PatchDatabase() = default;
  PatchDatabase(int dim, int channels, int patch_side, int rf_side);

  /// Adds every cell of `grid` (computed on `image`). Geometry must match the
  /// database's patch and rf sides.
  void add_image(const std::string& image_id, const Image& image, const FeatureGrid& grid);

  std::size_t size() const { return index_.size(); }
  int dim() const { return dim_; }
  int channels() const { return channels_; }
  int patch_side() const { return patch_side_; }
  int rf_side() const { return rf_side_; }
  const NNIndex& index() const { return index_; }

  /// Pixels of entry i as float images.
  Image patch(std::size_t i) const;
  Image rf_crop(std::size_t i) const;

  /// Mean of the given patches or rf crops.
  Image mean_patch(std::span<const Neighbor> neighbors) const;
  Image mean_rf_crop(std::span<const Neighbor> neighbors) const;

  /// DCPD container: "DCPD", u32 version, dim, channels, patch_side, rf_side,
  /// count, then per entry: u32 id length, id bytes, dim f32, patch u8,
  /// rf u8. Little-endian.
  void save(const std::filesystem::path& path) const;
  static PatchDatabase load(const std::filesystem::path& path);

 private:
  int dim_ = 0;
  int channels_ = 1;
  int patch_side_ = 1;
  int rf_side_ = 0;
  NNIndex index_;
  std::vector<std::uint8_t> patches_;
  std::vector<std::uint8_t> rf_crops_;
};

/// Replaces the center patch of every cell of `features` (computed on
/// `image`) with the mean of its k nearest database patches by cosine.
/// Pixels not covered by any center patch are black.
Image patch_reconstruction(const Image& image, const FeatureGrid& features, const PatchDatabase& db, int k);

/// Offset drawn uniformly from an n x n window: [-(n / 2), n - 1 - n / 2].
struct Offset {
  int dx = 0;
  int dy = 0;
};
Offset draw_uniform_offset(std::mt19937_64& rng, int neighborhood);

/// Control image for a feature that kept no spatial information inside its
/// rf: each center patch of the `geometry` lattice is copied from a random
/// database image at a uniformly random offset within an rf-sized window
/// around the same location. Deterministic in `seed`.
Image uniform_rf_baseline(const Image& image, const GridGeometry& geometry, std::span<const Image> db_images,
                          std::uint64_t seed);

/// Linear contrast stretch over all channels, min -> 0 and max -> 255; a
/// constant image becomes 128.
Image stretch_contrast(const Image& image);

/// Mean rf crop of the k nearest database features to `seed_feature`,
/// contrast stretched.
Image rf_average(std::span<const float> seed_feature, const PatchDatabase& db, int k);

/// Lattice of cells whose rf centers fall inside a width x height image.
struct CellLattice {
  int rows = 0;
  int cols = 0;
};
CellLattice covering_lattice(const GridGeometry& geometry, int width, int height);

}  // namespace densecorr
