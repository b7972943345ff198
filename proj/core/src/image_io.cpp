#include "udnf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace udnf {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::string& path, const Image8& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("write_image: cannot open " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw DataError("write_image: libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("write_image: libpng failure writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  // Strip timestamps so identical pixels give identical bytes.
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.rgb.data() + std::size_t(y) * img.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image8 read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("read_image: cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw DataError("read_image: libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("read_image: malformed PNG " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  Image8 img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.rgb.resize(std::size_t(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y)
    png_read_row(png, img.rgb.data() + std::size_t(y) * img.width * 3, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_ppm(const std::string& path, const Image8& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("write_image: cannot open " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size()));
  if (!f) throw DataError("write_image: short write to " + path);
}

Image8 read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("read_image: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw DataError("read_image: unsupported PPM header in " + path);
  f.get();  // single whitespace after header
  Image8 img;
  img.width = w;
  img.height = h;
  img.rgb.resize(std::size_t(w) * h * 3);
  f.read(reinterpret_cast<char*>(img.rgb.data()),
         static_cast<std::streamsize>(img.rgb.size()));
  if (!f) throw DataError("read_image: truncated PPM " + path);
  return img;
}

}  // namespace

void write_image(const std::string& path, const Image8& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.rgb.size() != std::size_t(img.width) * img.height * 3)
    throw DataError("write_image: inconsistent image buffer");
  if (ends_with(path, ".ppm"))
    write_ppm(path, img);
  else
    write_png(path, img);
}

Image8 read_image(const std::string& path) {
  return ends_with(path, ".ppm") ? read_ppm(path) : read_png(path);
}

Image8 quantize(const std::vector<float>& rgb, int width, int height) {
  if (rgb.size() != std::size_t(width) * height * 3)
    throw DataError("quantize: buffer size mismatch");
  Image8 img;
  img.width = width;
  img.height = height;
  img.rgb.resize(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const float v = std::clamp(rgb[i], 0.0f, 1.0f);
    img.rgb[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return img;
}

std::vector<float> dequantize(const Image8& img) {
  std::vector<float> out(img.rgb.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(img.rgb[i]) / 255.0f;
  return out;
}

}  // namespace udnf
