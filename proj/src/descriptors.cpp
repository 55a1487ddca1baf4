#include "densecorr/descriptors.hpp"

#include <cmath>
#include <numbers>

#include "densecorr/nn_index.hpp"

namespace densecorr {

void DenseDescriptorConfig::validate() const {
  if (grid_stride < 1) throw InvalidArgument("grid_stride must be >= 1");
  if (spatial_bins < 1 || orientation_bins < 1) throw InvalidArgument("bin counts must be >= 1");
  if (radius < spatial_bins) throw InvalidArgument("radius must be >= spatial_bins");
}

std::vector<float> describe_point(const Image& gray, int cx, int cy, const DenseDescriptorConfig& config) {
  const int r = config.radius;
  const int sb = config.spatial_bins;
  const int nb = config.orientation_bins;
  const double side = 2.0 * r + 1.0;
  std::vector<double> hist(static_cast<std::size_t>(config.dim()), 0.0);

  for (int dy = -r; dy <= r; ++dy) {
    const int y = cy + dy;
    const double v = (dy + r + 0.5) / side * sb - 0.5;
    const int v0 = static_cast<int>(std::floor(v));
    const double tv = v - v0;
    for (int dx = -r; dx <= r; ++dx) {
      const int x = cx + dx;
      const double gx = 0.5 * (gray.clamped(x + 1, y) - gray.clamped(x - 1, y));
      const double gy = 0.5 * (gray.clamped(x, y + 1) - gray.clamped(x, y - 1));
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;

      double o = std::atan2(gy, gx) / (2.0 * std::numbers::pi) * nb;
      if (o < 0) o += nb;
      int o0 = static_cast<int>(std::floor(o));
      const double to = o - o0;
      o0 %= nb;
      const int o1 = (o0 + 1) % nb;

      const double u = (dx + r + 0.5) / side * sb - 0.5;
      const int u0 = static_cast<int>(std::floor(u));
      const double tu = u - u0;

      for (int bv = 0; bv < 2; ++bv) {
        const int yb = v0 + bv;
        if (yb < 0 || yb >= sb) continue;
        const double wv = bv ? tv : 1.0 - tv;
        for (int bu = 0; bu < 2; ++bu) {
          const int xb = u0 + bu;
          if (xb < 0 || xb >= sb) continue;
          const double w = mag * wv * (bu ? tu : 1.0 - tu);
          double* bin = &hist[static_cast<std::size_t>((yb * sb + xb) * nb)];
          bin[o0] += w * (1.0 - to);
          bin[o1] += w * to;
        }
      }
    }
  }

  double norm = 0.0;
  for (double h : hist) norm += h * h;
  norm = std::sqrt(norm);
  std::vector<float> out(hist.size(), 0.0f);
  if (norm > 0.0)
    for (std::size_t i = 0; i < hist.size(); ++i) out[i] = static_cast<float>(hist[i] / norm);
  return out;
}

FeatureGrid dense_descriptors(const Image& image, const DenseDescriptorConfig& config) {
  config.validate();
  const int support = 2 * config.radius + 1;
  if (image.width < support || image.height < support)
    throw InvalidArgument("image smaller than the descriptor support");
  const Image gray = to_grayscale(image);
  const int cols = (image.width - support) / config.grid_stride + 1;
  const int rows = (image.height - support) / config.grid_stride + 1;
  FeatureGrid grid(rows, cols, config.dim(), {config.grid_stride, support, 2 * std::int64_t{config.radius}});
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const auto d = describe_point(gray, config.radius + j * config.grid_stride,
                                    config.radius + i * config.grid_stride, config);
      std::copy(d.begin(), d.end(), grid.at({i, j}).begin());
    }
  return grid;
}

std::vector<float> global_descriptor(const FeatureGrid& grid) {
  std::vector<float> v(grid.data().begin(), grid.data().end());
  normalize(v);
  return v;
}

}  // namespace densecorr
