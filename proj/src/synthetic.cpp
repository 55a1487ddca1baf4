#include "densecorr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "densecorr/descriptors.hpp"
#include "densecorr/manifest.hpp"

namespace densecorr::synthetic {

namespace fs = std::filesystem;

Image texture(std::mt19937_64& rng, int width, int height, int channels) {
  std::vector<double> acc(static_cast<std::size_t>(width) * height * channels, 128.0);
  const int blobs = std::max(1, width * height / 250);
  std::uniform_real_distribution<double> ux(0, width), uy(0, height), sigma(2.0, 8.0), amp(40.0, 120.0);
  std::bernoulli_distribution sign(0.5);
  for (int b = 0; b < blobs; ++b) {
    const double cx = ux(rng), cy = uy(rng), s = sigma(rng);
    std::vector<double> a(channels);
    for (auto& v : a) v = sign(rng) ? amp(rng) : -amp(rng);
    const int r = static_cast<int>(std::ceil(3 * s));
    for (int y = std::max(0, int(cy) - r); y <= std::min(height - 1, int(cy) + r); ++y)
      for (int x = std::max(0, int(cx) - r); x <= std::min(width - 1, int(cx) + r); ++x) {
        const double g = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s));
        for (int c = 0; c < channels; ++c) acc[(static_cast<std::size_t>(y) * width + x) * channels + c] += a[c] * g;
      }
  }
  Image img(width, height, channels);
  for (std::size_t k = 0; k < acc.size(); ++k) img.pixels[k] = static_cast<float>(std::round(std::clamp(acc[k], 0.0, 255.0)));
  return img;
}

Deformation::Deformation(std::mt19937_64& rng, double max_displacement, double wavelength) {
  constexpr int kWaves = 3;
  std::uniform_real_distribution<double> angle(0, 2 * std::numbers::pi), weight(0.2, 1.0);
  const double f = 2 * std::numbers::pi / wavelength;
  double sum_x = 0, sum_y = 0;
  for (int k = 0; k < kWaves; ++k) {
    const double dir = angle(rng);
    Wave w{f * std::cos(dir), f * std::sin(dir), angle(rng), weight(rng), weight(rng)};
    sum_x += w.ax;
    sum_y += w.ay;
    waves_.push_back(w);
  }
  for (auto& w : waves_) {
    w.ax *= max_displacement / sum_x;
    w.ay *= max_displacement / sum_y;
  }
}

Point Deformation::at(Point x) const {
  Point u;
  for (const auto& w : waves_) {
    const double s = std::sin(w.fx * x.x + w.fy * x.y + w.phase);
    u.x += w.ax * s;
    u.y += w.ay * s;
  }
  return u;
}

Point Deformation::forward(Point x) const {
  Point y = x;
  for (int it = 0; it < 100; ++it) {
    const Point u = at(y);
    const Point next{x.x + u.x, x.y + u.y};
    const bool done = std::abs(next.x - y.x) < 1e-9 && std::abs(next.y - y.y) < 1e-9;
    y = next;
    if (done) break;
  }
  return y;
}

Image deform(const Image& image, const Deformation& deformation) {
  Image out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const Point u = deformation.at({double(x), double(y)});
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = sample_bicubic(image, x - u.x, y - u.y, c);
    }
  return out;
}

void write_warped_family(const fs::path& dir, const WarpedFamilyOptions& options, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  fs::create_directories(dir / "images");
  const Image base = texture(rng, options.side, options.side);
  std::uniform_real_distribution<double> coord(0.15 * options.side, 0.85 * options.side);
  std::vector<Point> base_points(options.keypoints);
  for (auto& p : base_points) p = {coord(rng), coord(rng)};

  Manifest manifest;
  std::vector<KeypointSet> annotations;
  for (int i = 0; i < options.instances; ++i) {
    const std::string id = options.category + "_" + std::to_string(i);
    const Deformation d(rng, i == 0 ? 0.0 : options.max_displacement, options.wavelength);
    const fs::path image_path = dir / "images" / (id + ".png");
    write_png(i == 0 ? base : deform(base, d), image_path);

    KeypointSet kps;
    kps.image_id = id;
    kps.bbox = {0, 0, double(options.side), double(options.side)};
    for (int k = 0; k < options.keypoints; ++k) {
      const Point p = i == 0 ? base_points[k] : d.forward(base_points[k]);
      kps.points["kp" + std::to_string(k)] = {p.x, p.y, true};
    }
    annotations.push_back(std::move(kps));

    ManifestRecord r;
    r.id = id;
    r.image = image_path;
    r.annotations = dir / "annotations.csv";
    r.category = options.category;
    r.split = (options.val_every > 0 && i % options.val_every == options.val_every - 1) ? Split::val : Split::train;
    manifest.add(std::move(r));
  }
  write_annotations(annotations, dir / "annotations.csv");
  manifest.write(dir / "manifest.tsv");
}

void write_planted(const fs::path& dir, const PlantedOptions& options, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  fs::create_directories(dir / "grids");
  fs::create_directories(dir / "global");
  const GridGeometry& geom = options.geometry;
  // Mean positions on the lattice, far enough apart that jitter never merges them.
  const std::vector<std::pair<std::string, Cell>> means{
      {"left", {options.rows / 2, options.cols / 4}},
      {"right", {options.rows / 2, 3 * options.cols / 4}},
      {"top", {options.rows / 5, options.cols / 2}},
  };
  if (options.dim < static_cast<int>(means.size())) throw InvalidArgument("planted grids need dim >= 3");
  std::normal_distribution<float> noise(0.0f, options.noise);
  std::uniform_int_distribution<int> jitter(-options.jitter_cells, options.jitter_cells);

  Manifest manifest;
  std::vector<KeypointSet> annotations;
  for (int n = 0; n < options.instances; ++n) {
    const std::string id = options.category + "_" + std::to_string(n);
    FeatureGrid grid(options.rows, options.cols, options.dim, geom);
    for (int i = 0; i < options.rows; ++i)
      for (int j = 0; j < options.cols; ++j)
        for (auto& v : grid.at({i, j})) v = noise(rng);

    KeypointSet kps;
    kps.image_id = id;
    kps.bbox = {0, 0, double(options.box), double(options.box)};
    for (std::size_t k = 0; k < means.size(); ++k) {
      const Cell c{std::clamp(means[k].second.row + jitter(rng), 0, options.rows - 1),
                   std::clamp(means[k].second.col + jitter(rng), 0, options.cols - 1)};
      grid.at(c)[k] += options.signal;
      const Point p = rf_center(geom, c);
      kps.points[means[k].first] = {p.x, p.y, true};
    }
    annotations.push_back(std::move(kps));

    const fs::path grid_path = dir / "grids" / (id + "_" + options.layer + ".dcfg");
    write_grid(grid, grid_path);
    const auto g = global_descriptor(grid);
    const fs::path global_path = dir / "global" / (id + ".dcfg");
    write_grid(FeatureGrid(1, 1, static_cast<int>(g.size()), {}, g), global_path);

    ManifestRecord r;
    r.id = id;
    r.grids[options.layer] = grid_path;
    r.global = global_path;
    r.annotations = dir / "annotations.csv";
    r.category = options.category;
    r.split = (options.val_every > 0 && n % options.val_every == options.val_every - 1) ? Split::val : Split::train;
    manifest.add(std::move(r));
  }
  write_annotations(annotations, dir / "annotations.csv");
  manifest.write(dir / "manifest.tsv");
}

}  // namespace densecorr::synthetic
