#include "densecorr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace densecorr {

Image::Image(int w, int h, int c, float fill) : width(w), height(h), channels(c) {
  if (w < 0 || h < 0 || c < 1) throw InvalidArgument("bad image dimensions");
  pixels.assign(static_cast<std::size_t>(w) * h * c, fill);
}

float Image::clamped(int x, int y, int c) const {
  return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1), c);
}

Image to_grayscale(const Image& image) {
  if (image.channels == 1) return image;
  if (image.channels < 3) throw InvalidArgument("grayscale conversion needs 1 or 3+ channels");
  Image gray(image.width, image.height, 1);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      gray.at(x, y) = 0.299f * image.at(x, y, 0) + 0.587f * image.at(x, y, 1) + 0.114f * image.at(x, y, 2);
  return gray;
}

namespace {

// Catmull-Rom weights for taps at -1, 0, 1, 2 relative to floor(x).
void cubic_weights(double t, double w[4]) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  w[0] = 0.5 * (-t3 + 2.0 * t2 - t);
  w[1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
  w[2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
  w[3] = 0.5 * (t3 - t2);
}

}  // namespace

float sample_bicubic(const Image& image, double x, double y, int channel) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double tx = x - fx;
  const double ty = y - fy;
  const int ix = static_cast<int>(fx);
  const int iy = static_cast<int>(fy);
  if (tx == 0.0 && ty == 0.0) return image.clamped(ix, iy, channel);

  double wx[4], wy[4];
  cubic_weights(tx, wx);
  cubic_weights(ty, wy);
  double acc = 0.0;
  for (int j = 0; j < 4; ++j) {
    double row = 0.0;
    for (int i = 0; i < 4; ++i) row += wx[i] * image.clamped(ix - 1 + i, iy - 1 + j, channel);
    acc += wy[j] * row;
  }
  return static_cast<float>(acc);
}

Image crop_resize(const Image& image, double x, double y, double w, double h, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1 || w <= 0 || h <= 0) throw InvalidArgument("crop_resize needs a positive box");
  Image out(out_w, out_h, image.channels);
  const double sx = w / out_w;
  const double sy = h / out_h;
  for (int v = 0; v < out_h; ++v)
    for (int u = 0; u < out_w; ++u)
      for (int c = 0; c < image.channels; ++c)
        out.at(u, v, c) = sample_bicubic(image, x + (u + 0.5) * sx - 0.5, y + (v + 0.5) * sy - 0.5, c);
  return out;
}

Image crop_clamped(const Image& image, const PixelRect& rect) {
  Image out(rect.width(), rect.height(), image.channels);
  for (int y = 0; y < rect.height(); ++y)
    for (int x = 0; x < rect.width(); ++x)
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = image.clamped(rect.x0 + x, rect.y0 + y, c);
  return out;
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + png.message);
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + msg);
  }
  Image out(static_cast<int>(png.width), static_cast<int>(png.height), color ? 3 : 1);
  std::transform(buffer.begin(), buffer.end(), out.pixels.begin(), [](png_byte b) { return static_cast<float>(b); });
  return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) throw InvalidArgument("PNG output needs 1 or 3 channels");
  std::vector<png_byte> buffer(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), buffer.begin(), [](float v) {
    return static_cast<png_byte>(std::clamp(std::lround(v), 0L, 255L));
  });
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  auto tmp = path;
  tmp += ".tmp";
  if (!png_image_write_to_file(&png, tmp.c_str(), 0, buffer.data(), 0, nullptr))
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + png.message);
  std::filesystem::rename(tmp, path);
}

}  // namespace densecorr
