#pragma once

#include <filesystem>
#include <string>

#include "uta/image.hpp"

namespace uta {

/// Reads an 8-bit PNG as a [0,1] raster. Color inputs are converted to gray
/// with Rec.601 weights; 16-bit inputs are scaled down.
Image read_png_gray(const std::filesystem::path& path);

/// Writes a [0,1] raster as an 8-bit grayscale PNG (values clamped, rounded).
void write_png_gray(const std::filesystem::path& path, const Image& img);

/// 8-bit color PNG of an RGB triple, used by the simulated-data generator.
void write_png_rgb(const std::filesystem::path& path, const ColorImage& img);
ColorImage read_png_rgb(const std::filesystem::path& path);

}  // namespace uta
