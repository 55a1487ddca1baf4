#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "densecorr/geometry.hpp"

namespace densecorr {

/// Interleaved float image, nominal range [0, 255].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f);

  bool empty() const { return pixels.empty(); }
  float& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }

  /// Edge-clamped read.
  float clamped(int x, int y, int c = 0) const;

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Luma with weights 0.299 / 0.587 / 0.114; single-channel input is copied.
Image to_grayscale(const Image& image);

/// Catmull-Rom bicubic sample at a continuous position, clamping to the edge.
/// Integer positions reproduce the stored samples exactly.
float sample_bicubic(const Image& image, double x, double y, int channel);

/// Crops `rect` (edge-clamped where it leaves the image) and resamples it to
/// side x side pixels with bicubic interpolation.
Image crop_resize(const Image& image, double x, double y, double w, double h, int out_w, int out_h);

/// Extracts `rect`, replicating edge pixels outside the image.
Image crop_clamped(const Image& image, const PixelRect& rect);

/// Reads 8-bit PNG as gray or RGB (alpha dropped).
Image read_png(const std::filesystem::path& path);

/// Rounds and saturates to 8 bits. 1 channel -> gray, 3 -> RGB.
void write_png(const Image& image, const std::filesystem::path& path);

}  // namespace densecorr
