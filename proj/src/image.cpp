#include "coadapt/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "coadapt/error.hpp"

namespace coadapt {

ToyImage::ToyImage(int h, int w, int c, double fill)
    : height(h), width(w), channels(c),
      pixels(static_cast<std::size_t>(h) * w * c, fill) {}

std::vector<std::uint8_t> quantize(const ToyImage& img) {
  std::vector<std::uint8_t> out(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), out.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
  });
  return out;
}

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t offset;
};

void read_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->bytes->size()) {
    png_error(png, "truncated PNG stream");
  }
  std::memcpy(data, cur->bytes->data() + cur->offset, length);
  cur->offset += length;
}

// libpng reports errors by longjmp; these two helpers keep every object with
// a destructor outside the setjmp frame.
bool write_rgb_png(const std::uint8_t* rgb, int width, int height, std::vector<std::uint8_t>* out) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, out, append_bytes, nullptr);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<std::uint8_t*>(rgb) + static_cast<std::size_t>(y) * width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

bool read_rgb_png(ReadCursor* cursor, int* width, int* height, std::vector<std::uint8_t>* rgb) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, cursor, read_bytes);
  png_read_info(png, info);
  *width = static_cast<int>(png_get_image_width(png, info));
  *height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_bit_depth(png, info) != 8 || png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  rgb->resize(static_cast<std::size_t>(*width) * *height * 3);
  for (int y = 0; y < *height; ++y) {
    png_read_row(png, rgb->data() + static_cast<std::size_t>(y) * *width * 3, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ToyImage& img) {
  if (img.channels != 3 && img.channels != 1) {
    fail(ErrorCode::WriteError, "PNG export supports 1 or 3 channels");
  }
  const auto q = quantize(img);
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(img.height) * img.width * 3);
  for (std::size_t p = 0; p < static_cast<std::size_t>(img.height) * img.width; ++p) {
    for (int c = 0; c < 3; ++c) {
      rgb[p * 3 + c] = img.channels == 3 ? q[p * 3 + c] : q[p];
    }
  }
  std::vector<std::uint8_t> out;
  if (!write_rgb_png(rgb.data(), img.width, img.height, &out)) {
    fail(ErrorCode::WriteError, "PNG encoding failed");
  }
  return out;
}

void render_png(const ToyImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::WriteError, "cannot open " + path.string());
  file.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!file) fail(ErrorCode::WriteError, "write failed for " + path.string());
}

ToyImage decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    fail(ErrorCode::ParseError, "not a PNG stream");
  }
  ReadCursor cursor{&bytes, 0};
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
  if (!read_rgb_png(&cursor, &width, &height, &rgb)) {
    fail(ErrorCode::ParseError, "unsupported or corrupt PNG (expected 8-bit RGB)");
  }
  ToyImage img(height, width, 3);
  std::transform(rgb.begin(), rgb.end(), img.pixels.begin(), [](std::uint8_t v) { return v / 255.0; });
  return img;
}

ToyImage read_png(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::ParseError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string png_data_uri(const ToyImage& img) {
  return "data:image/png;base64," + base64_encode(encode_png(img));
}

}  // namespace coadapt
