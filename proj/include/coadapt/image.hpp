#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace coadapt {

/// H x W x C float image, row-major with interleaved channels, values in [0, 1].
struct ToyImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;

  ToyImage() = default;
  ToyImage(int h, int w, int c, double fill = 0.0);

  double& at(int y, int x, int c) { return pixels[index(y, x, c)]; }
  double at(int y, int x, int c) const { return pixels[index(y, x, c)]; }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  bool same_shape(const ToyImage& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }

  bool operator==(const ToyImage&) const = default;
};

/// round(255 * v) per sample, v assumed in [0, 1].
std::vector<std::uint8_t> quantize(const ToyImage& img);

/// 8-bit RGB PNG (single-channel images are replicated to gray RGB).
std::vector<std::uint8_t> encode_png(const ToyImage& img);
void render_png(const ToyImage& img, const std::filesystem::path& path);

/// Decodes an 8-bit RGB PNG into [0, 1] floats (value / 255).
ToyImage read_png(const std::filesystem::path& path);
ToyImage decode_png(const std::vector<std::uint8_t>& bytes);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::string png_data_uri(const ToyImage& img);

}  // namespace coadapt
