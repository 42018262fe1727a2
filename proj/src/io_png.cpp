#include "uta/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace uta {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Decodes any PNG into 8-bit RGB rows.
void read_png_rgb8(const std::filesystem::path& path, std::vector<std::vector<png_byte>>& rows,
                   int& width, int& height) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open PNG for reading: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng failure while reading " + path.string());
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  rows.assign(height, std::vector<png_byte>(png_get_rowbytes(png, info)));
  std::vector<png_bytep> row_ptrs(height);
  for (int y = 0; y < height; ++y) row_ptrs[y] = rows[y].data();
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
}

void write_png_rows(const std::filesystem::path& path, const std::vector<std::vector<png_byte>>& rows,
                    int width, int height, int color_type) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot open PNG for writing: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failure while writing " + path.string());
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(rows[y].data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

png_byte to_byte(double v) {
  const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<png_byte>(std::lround(c * 255.0));
}

}  // namespace

Image read_png_gray(const std::filesystem::path& path) {
  std::vector<std::vector<png_byte>> rows;
  int w = 0, h = 0;
  read_png_rgb8(path, rows, w, h);
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double r = rows[y][3 * x] / 255.0;
      const double g = rows[y][3 * x + 1] / 255.0;
      const double b = rows[y][3 * x + 2] / 255.0;
      out.at(y, x) = 0.299 * r + 0.587 * g + 0.114 * b;
    }
  return out;
}

void write_png_gray(const std::filesystem::path& path, const Image& img) {
  const int h = img.height(), w = img.width();
  std::vector<std::vector<png_byte>> rows(h, std::vector<png_byte>(w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) rows[y][x] = to_byte(img.at(y, x));
  write_png_rows(path, rows, w, h, PNG_COLOR_TYPE_GRAY);
}

void write_png_rgb(const std::filesystem::path& path, const ColorImage& img) {
  const int h = img.height(), w = img.width();
  std::vector<std::vector<png_byte>> rows(h, std::vector<png_byte>(3 * w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      rows[y][3 * x] = to_byte(img.r.at(y, x));
      rows[y][3 * x + 1] = to_byte(img.g.at(y, x));
      rows[y][3 * x + 2] = to_byte(img.b.at(y, x));
    }
  write_png_rows(path, rows, w, h, PNG_COLOR_TYPE_RGB);
}

ColorImage read_png_rgb(const std::filesystem::path& path) {
  std::vector<std::vector<png_byte>> rows;
  int w = 0, h = 0;
  read_png_rgb8(path, rows, w, h);
  ColorImage out{Image(h, w), Image(h, w), Image(h, w)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      out.r.at(y, x) = rows[y][3 * x] / 255.0;
      out.g.at(y, x) = rows[y][3 * x + 1] / 255.0;
      out.b.at(y, x) = rows[y][3 * x + 2] / 255.0;
    }
  return out;
}

}  // namespace uta
