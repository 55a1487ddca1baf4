#pragma once

#include <array>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "densecorr/keypoints.hpp"

namespace densecorr {

struct PckReport {
  double alpha = 0.0;
  std::map<std::string, double> per_type;       // accuracy in [0, 1]
  std::map<std::string, int> visible_count;     // visible ground truths per type
  double mean = 0.0;                            // unweighted over types with >= 1 visible truth
};

/// A visible ground-truth keypoint is correct iff a visible prediction of the
/// same name lies strictly closer than alpha * max(bbox w, bbox h). Invisible
/// ground truths are skipped. Counts are pooled over all images per type.
/// Every truth needs a prediction set with the same image id and vice versa.
PckReport pck(std::span<const KeypointSet> predictions, std::span<const KeypointSet> truths, double alpha);

/// Comma-separated table: a header `method,<col>...,mean` and one row per
/// method, values in percent with one decimal.
std::string format_pck_table(const std::vector<std::string>& columns,
                             const std::vector<std::pair<std::string, std::vector<double>>>& rows);

/// Locations of maximum classifier response on a 21 x 21 pixel lattice
/// centered on the ground truth. Maxima on the border are counted apart.
class ResponseHistogram {
 public:
  static constexpr int kSide = 21;
  static constexpr int kHalf = kSide / 2;

  /// score(dx, dy) is evaluated for dx, dy in [-10, 10]; ties go to the first
  /// maximum in row-major order.
  void add(const std::function<double(int dx, int dy)>& score);

  int count(int dx, int dy) const { return counts_[(dy + kHalf) * kSide + (dx + kHalf)]; }
  int excluded_boundary() const { return excluded_; }
  int total() const;

 private:
  std::array<int, kSide * kSide> counts_{};
  int excluded_ = 0;
};

}  // namespace densecorr
