#pragma once

// Synthetic data with known ground truth: textured images under smooth
// deformations, and feature grids with planted keypoint signatures.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "densecorr/feature_grid.hpp"
#include "densecorr/image.hpp"
#include "densecorr/keypoints.hpp"

namespace densecorr::synthetic {

/// Sum of random Gaussian blobs over a gray background, values in [0, 255].
Image texture(std::mt19937_64& rng, int width, int height, int channels = 1);

/// Smooth displacement field u(x) = sum_k a_k sin(f_k . x + phase_k),
/// scaled so that |u| never exceeds `max_displacement` per axis.
class Deformation {
 public:
  Deformation() = default;
  Deformation(std::mt19937_64& rng, double max_displacement, double wavelength);

  Point at(Point x) const;

  /// Where the source point x lands in the deformed image: the solution y of
  /// y = x + u(y), by fixed-point iteration.
  Point forward(Point x) const;

 private:
  struct Wave {
    double fx, fy, phase, ax, ay;
  };
  std::vector<Wave> waves_;
};

/// Deformed copy: out(y) = image(y - u(y)), bicubic, edge-clamped.
Image deform(const Image& image, const Deformation& deformation);

struct WarpedFamilyOptions {
  int instances = 8;
  int side = 224;
  int keypoints = 8;
  double max_displacement = 10.0;
  double wavelength = 160.0;
  std::string category = "blob";
  int val_every = 4;  // every n-th instance is in the val split
};

/// Writes images/, annotations.csv and manifest.tsv (no grids) under `dir`.
/// Instance 0 is the undeformed base; keypoints follow the deformation.
void write_warped_family(const std::filesystem::path& dir, const WarpedFamilyOptions& options, std::uint64_t seed);

struct PlantedOptions {
  int instances = 12;
  int box = 500;
  int dim = 8;
  GridGeometry geometry{16, 163, 162};
  int rows = 26;
  int cols = 26;
  // Detector margins scale like c * samples * signal^2, so at the default
  // c = 1e-6 the signature must be large for scores to rise above the prior.
  float signal = 2000.0f;
  float noise = 5.0f;
  int jitter_cells = 2;
  std::string layer = "conv5";
  std::string category = "planted";
  int val_every = 3;
};

/// Feature grids in which keypoint k sits on a cell whose descriptor is a
/// fixed prototype plus noise; every other cell is noise. Keypoints jitter
/// around fixed mean positions. Writes grids/, global/, annotations.csv and
/// manifest.tsv under `dir`.
void write_planted(const std::filesystem::path& dir, const PlantedOptions& options, std::uint64_t seed);

}  // namespace densecorr::synthetic
