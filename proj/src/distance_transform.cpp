#include "densecorr/distance_transform.hpp"

#include <cmath>
#include <limits>

#include "densecorr/types.hpp"

namespace densecorr {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void QuadraticEnvelope::transform(const double* in, int n, std::ptrdiff_t stride, double weight, double* out,
                                  int* arg) {
  if (!(weight >= 0.0)) throw InvalidArgument("distance transform weight must be >= 0");
  auto f = [&](int p) { return in[p * stride]; };

  if (weight == 0.0) {
    int best = -1;
    for (int p = 0; p < n; ++p)
      if (std::isfinite(f(p)) && (best < 0 || f(p) < f(best))) best = p;
    for (int q = 0; q < n; ++q) {
      out[q * stride] = best < 0 ? kInf : f(best);
      if (arg) arg[q * stride] = best;
    }
    return;
  }

  vertices_.resize(static_cast<std::size_t>(n));
  bounds_.resize(static_cast<std::size_t>(n) + 1);
  int* v = vertices_.data();
  double* z = bounds_.data();
  // Abscissa where the parabolas rooted at p < q intersect.
  auto meet = [&](int p, int q) { return (f(q) - f(p)) / (2.0 * weight * (q - p)) + 0.5 * (q + p); };

  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f(q))) continue;
    double s = -kInf;
    while (k >= 0) {
      s = meet(v[k], q);
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : s;
    z[k + 1] = kInf;
  }

  if (k < 0) {
    for (int q = 0; q < n; ++q) {
      out[q * stride] = kInf;
      if (arg) arg[q * stride] = -1;
    }
    return;
  }

  int j = 0;
  for (int q = 0; q < n; ++q) {
    // Strict comparison keeps a boundary point with the earlier parabola.
    while (z[j + 1] < q) ++j;
    const int p = v[j];
    const double d = q - p;
    out[q * stride] = f(p) + weight * d * d;
    if (arg) arg[q * stride] = p;
  }
}

DistanceTransform1D dt1d_quadratic(std::span<const double> costs, double weight) {
  const int n = static_cast<int>(costs.size());
  if (n < 1) throw InvalidArgument("dt1d_quadratic needs at least one cost");
  DistanceTransform1D r{std::vector<double>(costs.size()), std::vector<int>(costs.size())};
  QuadraticEnvelope env;
  env.transform(costs.data(), n, 1, weight, r.values.data(), r.argmin.data());
  return r;
}

DistanceTransform2D dt2d_quadratic(std::span<const double> costs, int rows, int cols, double weight) {
  if (rows < 1 || cols < 1 || costs.size() != static_cast<std::size_t>(rows) * cols)
    throw InvalidArgument("dt2d_quadratic: costs must hold rows * cols values");
  const std::size_t n = costs.size();
  DistanceTransform2D r{rows, cols, std::vector<double>(n), std::vector<int>(n), std::vector<int>(n)};
  std::vector<double> tmp(n);
  std::vector<int> arg_col(n);
  QuadraticEnvelope env;
  for (int i = 0; i < rows; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * cols;
    env.transform(costs.data() + base, cols, 1, weight, tmp.data() + base, arg_col.data() + base);
  }
  for (int j = 0; j < cols; ++j) env.transform(tmp.data() + j, rows, cols, weight, r.values.data() + j, r.argmin_row.data() + j);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const std::size_t at = static_cast<std::size_t>(i) * cols + j;
      const int src_row = r.argmin_row[at];
      r.argmin_col[at] = src_row < 0 ? -1 : arg_col[static_cast<std::size_t>(src_row) * cols + j];
    }
  return r;
}

}  // namespace densecorr
