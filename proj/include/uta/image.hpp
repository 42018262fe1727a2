#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "uta/errors.hpp"

namespace uta {

/// Single-channel raster of doubles, row-major. Intensities are expected in
/// [0,1] unless a routine states otherwise.
class Image {
 public:
  Image() = default;
  Image(int height, int width, double fill = 0.0)
      : h_(height), w_(width), px_(static_cast<size_t>(height) * width, fill) {
    if (height < 0 || width < 0) throw ShapeError("Image: negative dimensions");
  }

  int height() const { return h_; }
  int width() const { return w_; }
  size_t size() const { return px_.size(); }
  bool empty() const { return px_.empty(); }

  double& at(int y, int x) { return px_[static_cast<size_t>(y) * w_ + x]; }
  double at(int y, int x) const { return px_[static_cast<size_t>(y) * w_ + x]; }
  double& operator[](size_t i) { return px_[i]; }
  double operator[](size_t i) const { return px_[i]; }

  double* data() { return px_.data(); }
  const double* data() const { return px_.data(); }

  bool same_shape(const Image& o) const { return h_ == o.h_ && w_ == o.w_; }
  bool in_bounds(int y, int x) const { return y >= 0 && y < h_ && x >= 0 && x < w_; }

  /// Bilinear sample at (x, y) in pixel coordinates; zero outside the raster.
  double sample_bilinear(double x, double y) const;

  void fill(double v) { px_.assign(px_.size(), v); }
  void clamp01();

  double min_value() const;
  double max_value() const;
  double mean() const;
  double variance() const;  // population variance

  bool operator==(const Image& o) const {
    return h_ == o.h_ && w_ == o.w_ && px_ == o.px_;
  }

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<double> px_;
};

/// Thermal frames are plain intensity rasters.
using ThermalFrame = Image;

/// Event raster paired with the time window it aggregates.
struct EventFrame {
  Image pixels;
  std::int64_t t_start_us = 0;
  std::int64_t t_end_us = 1;
};

/// Three-channel color frame, used only by the simulated-data generator.
struct ColorImage {
  Image r, g, b;
  int height() const { return r.height(); }
  int width() const { return r.width(); }
  /// Rec.601 luma.
  Image luminance() const;
};

// Shared raster helpers.
Image gaussian_blur(const Image& img, double sigma);     // reflect padding
Image box_downsample2(const Image& img);                 // 2x2 mean
Image resize_bilinear(const Image& img, int out_h, int out_w);
Image local_variance(const Image& img, int window);      // box window, reflect

// Pixel permutations used by the training augmentations.
Image crop_image(const Image& img, int y0, int x0, int h, int w);
Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);
Image rotate90(const Image& img, int quarter_turns);

}  // namespace uta
