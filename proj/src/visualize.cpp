#include "densecorr/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "densecorr/binary_io.hpp"

namespace densecorr {

namespace {

std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

void append_pixels(std::vector<std::uint8_t>& dst, const Image& img) {
  for (float v : img.pixels) dst.push_back(to_byte(v));
}

Image from_bytes(const std::uint8_t* src, int side, int channels) {
  Image img(side, side, channels);
  std::transform(src, src + img.pixels.size(), img.pixels.begin(), [](std::uint8_t b) { return static_cast<float>(b); });
  return img;
}

Image mean_of(std::span<const Neighbor> neighbors, const std::vector<std::uint8_t>& store, int side, int channels) {
  if (neighbors.empty()) throw InvalidArgument("mean of zero patches");
  const std::size_t stride = static_cast<std::size_t>(side) * side * channels;
  std::vector<double> acc(stride, 0.0);
  for (const auto& n : neighbors) {
    const std::uint8_t* src = store.data() + n.index * stride;
    for (std::size_t k = 0; k < stride; ++k) acc[k] += src[k];
  }
  Image out(side, side, channels);
  for (std::size_t k = 0; k < stride; ++k) out.pixels[k] = static_cast<float>(acc[k] / neighbors.size());
  return out;
}

}  // namespace

PatchDatabase::PatchDatabase(int dim, int channels, int patch_side, int rf_side)
    : dim_(dim), channels_(channels), patch_side_(patch_side), rf_side_(rf_side), index_(dim) {
  if (dim < 1 || channels < 1 || patch_side < 1 || rf_side < 0) throw InvalidArgument("bad patch database shape");
}

void PatchDatabase::add_image(const std::string& image_id, const Image& image, const FeatureGrid& grid) {
  if (grid.dim() != dim_) throw InvalidArgument("feature dimension does not match the database");
  if (image.channels != channels_) throw InvalidArgument("image channels do not match the database");
  if (grid.geometry().stride != patch_side_ || (rf_side_ && grid.geometry().rf_size != rf_side_))
    throw InvalidArgument("grid geometry does not match the database");
  for (int i = 0; i < grid.height(); ++i)
    for (int j = 0; j < grid.width(); ++j) {
      const auto f = grid.at({i, j});
      // Zero descriptors carry no direction and cannot be matched by cosine.
      if (std::all_of(f.begin(), f.end(), [](float v) { return v == 0.0f; })) continue;
      index_.add(image_id + ":" + std::to_string(i) + ":" + std::to_string(j), f);
      append_pixels(patches_, crop_clamped(image, center_patch_rect(grid.geometry(), {i, j})));
      if (rf_side_) append_pixels(rf_crops_, crop_clamped(image, rf_rect(grid.geometry(), {i, j})));
    }
}

Image PatchDatabase::patch(std::size_t i) const {
  return from_bytes(patches_.data() + i * patch_side_ * patch_side_ * channels_, patch_side_, channels_);
}

Image PatchDatabase::rf_crop(std::size_t i) const {
  if (!rf_side_) throw InvalidArgument("database stores no rf crops");
  return from_bytes(rf_crops_.data() + i * rf_side_ * rf_side_ * channels_, rf_side_, channels_);
}

Image PatchDatabase::mean_patch(std::span<const Neighbor> neighbors) const {
  return mean_of(neighbors, patches_, patch_side_, channels_);
}

Image PatchDatabase::mean_rf_crop(std::span<const Neighbor> neighbors) const {
  if (!rf_side_) throw InvalidArgument("database stores no rf crops");
  return mean_of(neighbors, rf_crops_, rf_side_, channels_);
}

namespace {
constexpr char kDbMagic[4] = {'D', 'C', 'P', 'D'};
constexpr std::uint32_t kDbVersion = 1;
}  // namespace

void PatchDatabase::save(const std::filesystem::path& path) const {
  std::ostringstream out(std::ios::binary);
  out.write(kDbMagic, 4);
  for (std::uint32_t v : {kDbVersion, static_cast<std::uint32_t>(dim_), static_cast<std::uint32_t>(channels_),
                          static_cast<std::uint32_t>(patch_side_), static_cast<std::uint32_t>(rf_side_),
                          static_cast<std::uint32_t>(size())})
    io::put_u32(out, v);
  const std::size_t patch_bytes = static_cast<std::size_t>(patch_side_) * patch_side_ * channels_;
  const std::size_t rf_bytes = static_cast<std::size_t>(rf_side_) * rf_side_ * channels_;
  for (std::size_t i = 0; i < size(); ++i) {
    const std::string& id = index_.id(i);
    io::put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (float v : index_.vector(i)) io::put_f32(out, v);
    out.write(reinterpret_cast<const char*>(patches_.data() + i * patch_bytes), static_cast<std::streamsize>(patch_bytes));
    out.write(reinterpret_cast<const char*>(rf_crops_.data() + i * rf_bytes), static_cast<std::streamsize>(rf_bytes));
  }
  io::write_file_atomic(path, out.str());
}

PatchDatabase PatchDatabase::load(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  std::istringstream in(bytes, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kDbMagic, 4))
    throw std::runtime_error("not a DCPD patch database: " + path.string());
  std::uint32_t version, dim, channels, patch_side, rf_side, count;
  if (!io::get_u32(in, version) || version != kDbVersion || !io::get_u32(in, dim) || !io::get_u32(in, channels) ||
      !io::get_u32(in, patch_side) || !io::get_u32(in, rf_side) || !io::get_u32(in, count))
    throw std::runtime_error("bad DCPD header: " + path.string());
  PatchDatabase db(static_cast<int>(dim), static_cast<int>(channels), static_cast<int>(patch_side),
                   static_cast<int>(rf_side));
  const std::size_t patch_bytes = std::size_t{patch_side} * patch_side * channels;
  const std::size_t rf_bytes = std::size_t{rf_side} * rf_side * channels;
  std::vector<float> feature(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len;
    if (!io::get_u32(in, len) || len > bytes.size()) throw std::runtime_error("truncated DCPD entry: " + path.string());
    std::string id(len, '\0');
    in.read(id.data(), len);
    for (auto& v : feature)
      if (!io::get_f32(in, v)) throw std::runtime_error("truncated DCPD entry: " + path.string());
    const std::size_t start = db.patches_.size();
    db.patches_.resize(start + patch_bytes);
    in.read(reinterpret_cast<char*>(db.patches_.data() + start), static_cast<std::streamsize>(patch_bytes));
    const std::size_t rf_start = db.rf_crops_.size();
    db.rf_crops_.resize(rf_start + rf_bytes);
    in.read(reinterpret_cast<char*>(db.rf_crops_.data() + rf_start), static_cast<std::streamsize>(rf_bytes));
    if (!in) throw std::runtime_error("truncated DCPD entry: " + path.string());
    db.index_.add(std::move(id), feature);
  }
  return db;
}

namespace {

void paste(Image& dst, const Image& src, const PixelRect& rect) {
  for (int y = std::max(rect.y0, 0); y < std::min(rect.y1, dst.height); ++y)
    for (int x = std::max(rect.x0, 0); x < std::min(rect.x1, dst.width); ++x)
      for (int c = 0; c < dst.channels; ++c) dst.at(x, y, c) = src.at(x - rect.x0, y - rect.y0, c);
}

}  // namespace

Image patch_reconstruction(const Image& image, const FeatureGrid& features, const PatchDatabase& db, int k) {
  if (db.size() == 0) throw InvalidArgument("patch database is empty");
  if (k < 1 || static_cast<std::size_t>(k) > db.size()) throw InvalidArgument("k must lie in [1, database size]");
  if (image.channels != db.channels()) throw InvalidArgument("image channels do not match the database");
  if (features.geometry().stride != db.patch_side()) throw InvalidArgument("feature stride does not match the database");
  Image out(image.width, image.height, image.channels, 0.0f);
  for (int i = 0; i < features.height(); ++i)
    for (int j = 0; j < features.width(); ++j) {
      const auto neighbors = db.index().knn(features.at({i, j}), static_cast<std::size_t>(k));
      paste(out, db.mean_patch(neighbors), center_patch_rect(features.geometry(), {i, j}));
    }
  return out;
}

Offset draw_uniform_offset(std::mt19937_64& rng, int neighborhood) {
  if (neighborhood < 1) throw InvalidArgument("neighborhood must be >= 1");
  std::uniform_int_distribution<int> pick(-(neighborhood / 2), neighborhood - 1 - neighborhood / 2);
  const int dx = pick(rng);
  const int dy = pick(rng);
  return {dx, dy};
}

CellLattice covering_lattice(const GridGeometry& geometry, int width, int height) {
  auto count = [&](int extent) {
    const double off = geometry.center_offset();
    if (off > extent - 1) return 0;
    return static_cast<int>(std::floor((extent - 1 - off) / geometry.stride)) + 1;
  };
  return {count(height), count(width)};
}

Image uniform_rf_baseline(const Image& image, const GridGeometry& geometry, std::span<const Image> db_images,
                          std::uint64_t seed) {
  if (db_images.empty()) throw InvalidArgument("uniform baseline needs at least one database image");
  for (const auto& img : db_images)
    if (img.channels != image.channels) throw InvalidArgument("database image channels do not match");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_image(0, db_images.size() - 1);
  Image out(image.width, image.height, image.channels, 0.0f);
  const CellLattice lattice = covering_lattice(geometry, image.width, image.height);
  for (int i = 0; i < lattice.rows; ++i)
    for (int j = 0; j < lattice.cols; ++j) {
      const Image& source = db_images[pick_image(rng)];
      const Offset o = draw_uniform_offset(rng, geometry.rf_size);
      const PixelRect rect = center_patch_rect(geometry, {i, j});
      const PixelRect shifted{rect.x0 + o.dx, rect.y0 + o.dy, rect.x1 + o.dx, rect.y1 + o.dy};
      paste(out, crop_clamped(source, shifted), rect);
    }
  return out;
}

Image stretch_contrast(const Image& image) {
  Image out = image;
  if (image.pixels.empty()) return out;
  const auto [lo, hi] = std::minmax_element(image.pixels.begin(), image.pixels.end());
  const float min = *lo, max = *hi;
  for (auto& v : out.pixels) v = max > min ? (v - min) * 255.0f / (max - min) : 128.0f;
  return out;
}

Image rf_average(std::span<const float> seed_feature, const PatchDatabase& db, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > db.size()) throw InvalidArgument("k must lie in [1, database size]");
  const auto neighbors = db.index().knn(seed_feature, static_cast<std::size_t>(k));
  return stretch_contrast(db.mean_rf_crop(neighbors));
}

}  // namespace densecorr
