#pragma once

// Generalized squared-Euclidean distance transform (lower envelope of
// parabolas), the min-convolution behind quadratic-pairwise BP messages.

#include <span>
#include <vector>

namespace densecorr {

struct DistanceTransform1D {
  std::vector<double> values;
  std::vector<int> argmin;
};

struct DistanceTransform2D {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major
  std::vector<int> argmin_row;
  std::vector<int> argmin_col;
};

/// values[q] = min_p costs[p] + weight * (q - p)^2 in O(n). Entries equal to
/// +infinity are treated as absent; an all-infinite input yields all-infinite
/// values and argmin -1. Ties resolve to the smallest p.
DistanceTransform1D dt1d_quadratic(std::span<const double> costs, double weight);

/// Separable 2D transform over a rows x cols lattice with cost
/// weight * |q - p|^2, computed along rows then along columns.
DistanceTransform2D dt2d_quadratic(std::span<const double> costs, int rows, int cols, double weight);

/// Allocation-free 1D transform over a strided view, for inner loops.
class QuadraticEnvelope {
 public:
  /// Reads n values at in[k * stride], writes out[k * stride] and
  /// (if non-null) arg[k * stride].
  void transform(const double* in, int n, std::ptrdiff_t stride, double weight, double* out, int* arg);

 private:
  std::vector<int> vertices_;
  std::vector<double> bounds_;
};

}  // namespace densecorr
