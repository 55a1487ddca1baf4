#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "densecorr/feature_grid.hpp"
#include "densecorr/keypoints.hpp"
#include "densecorr/svm.hpp"

namespace densecorr {

struct DetectorConfig {
  double c = 1e-6;
  double eta = 0.1;
  double sigma = 22.0;  // pixels
  int neighborhood = 3;
  int positives_per_keypoint = 10;
  int canonical_box = 500;
  int hnm_rounds = 10;
  int hnm_batch = 1000;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

/// Row-major concatenation of the n x n block centered at `cell`; cells off
/// the grid contribute zeros.
std::vector<float> stack_neighborhood(const FeatureGrid& grid, Cell cell, int n);

/// Geometry of the stacked descriptor: the rf grows by (n - 1) strides.
GridGeometry stacked_geometry(const GridGeometry& geometry, int n);

struct AnnotatedGrid {
  const FeatureGrid* grid = nullptr;
  const KeypointSet* keypoints = nullptr;
};

struct SampleOrigin {
  std::size_t image = 0;
  Cell cell;
};

struct TrainingSet {
  SampleMatrix positives;
  SampleMatrix negatives;
  std::vector<SampleOrigin> positive_origin;
  std::vector<SampleOrigin> negative_origin;
};

/// Per image with the keypoint visible: the positives_per_keypoint cells with
/// the closest rf centers are positives (ties: smaller (row, col)); every cell
/// whose stacked rf square does not contain the keypoint is a negative. Cells
/// in between are unused. Throws if the keypoint is visible nowhere.
TrainingSet build_training_set(std::span<const AnnotatedGrid> data, const std::string& keypoint,
                               const DetectorConfig& config);

/// Distance-threshold variant for hand-crafted descriptors: positives within
/// `positive_radius` pixels of the keypoint, negatives at least
/// `negative_radius` away.
TrainingSet build_training_set_by_distance(std::span<const AnnotatedGrid> data, const std::string& keypoint,
                                           double positive_radius, double negative_radius, int neighborhood);

struct MiningResult {
  LinearModel model;
  std::vector<std::size_t> active;  // pool indices, in insertion order
  int scans = 0;
  std::vector<LinearModel> history;  // model after every retraining, first entry is the input
};

/// Scores the pool, adds up to hnm_batch not-yet-active negatives with score
/// > -1 (highest first), retrains; repeats at most hnm_rounds times and stops
/// at the first scan with no new violators.
MiningResult mine_hard_negatives(const LinearModel& initial, const SampleMatrix& positives, const SampleMatrix& pool,
                                 std::vector<std::size_t> active, const DetectorConfig& config);

/// Initial fit on the positives plus a seeded sample of hnm_batch negatives,
/// followed by hard negative mining over all negatives.
MiningResult train_detector(const TrainingSet& set, const std::string& label, const DetectorConfig& config);

struct Classification {
  std::string label;
  std::vector<double> scores;  // one per model, in input order
};

/// Argmax of the margins; ties go to the lexicographically smallest label.
Classification classify_keypoint(std::span<const LinearModel> models, std::span<const float> feature);

/// exp(-|candidate - mu|^2 / (2 sigma^2)), in (0, 1].
double prior_score(Point candidate, Point mu, double sigma);

/// Logistic 1 / (1 + exp(-margin)).
double squash(double margin);

/// s^(1 - eta) * p^eta for s, p in (0, 1].
double fuse_scores(double s, double p, double eta);

/// (1 - eta) log s + eta log p, with the eta = 0 and eta = 1 terms dropped so
/// that an underflowed prior cannot poison a detector-only score.
double fuse_log_scores(double log_s, double log_p, double eta);

struct ScoreMap {
  int rows = 0;
  int cols = 0;
  std::vector<double> margin;     // raw detector margins
  std::vector<double> log_fused;  // log of the fused score
};

/// Argmax of a row-major map; ties go to the smaller (row, col).
Cell argmax_cell(std::span<const double> values, int rows, int cols);

struct KeypointPrediction {
  Point location;
  Cell cell;
  ScoreMap scores;
};

/// Scores every cell with the squashed detector margin on the stacked
/// neighborhood, fuses it with the Gaussian prior around `prior_mu` (a flat
/// prior when absent) and returns the rf center of the best cell.
KeypointPrediction predict_keypoint(const FeatureGrid& grid, const LinearModel& model, std::optional<Point> prior_mu,
                                    const DetectorConfig& config);

}  // namespace densecorr
