#include "uta/image.hpp"

#include <algorithm>
#include <cmath>

namespace uta {

double Image::sample_bilinear(double x, double y) const {
  if (x <= -1.0 || y <= -1.0 || x >= w_ || y >= h_) return 0.0;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  auto px = [&](int yy, int xx) -> double {
    return in_bounds(yy, xx) ? at(yy, xx) : 0.0;
  };
  const double v00 = px(y0, x0), v01 = px(y0, x0 + 1);
  const double v10 = px(y0 + 1, x0), v11 = px(y0 + 1, x0 + 1);
  return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
}

void Image::clamp01() {
  for (double& v : px_) v = std::clamp(v, 0.0, 1.0);
}

double Image::min_value() const {
  return px_.empty() ? 0.0 : *std::min_element(px_.begin(), px_.end());
}

double Image::max_value() const {
  return px_.empty() ? 0.0 : *std::max_element(px_.begin(), px_.end());
}

double Image::mean() const {
  if (px_.empty()) return 0.0;
  double s = 0.0;
  for (double v : px_) s += v;
  return s / px_.size();
}

double Image::variance() const {
  if (px_.empty()) return 0.0;
  if (min_value() == max_value()) return 0.0;  // exact for flat rasters
  const double m = mean();
  double s = 0.0;
  for (double v : px_) s += (v - m) * (v - m);
  return s / px_.size();
}

Image ColorImage::luminance() const {
  Image out(r.height(), r.width());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;

  const int h = img.height(), w = img.width();
  Image tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * img.at(y, reflect_index(x + i, w));
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * tmp.at(reflect_index(y + i, h), x);
      out.at(y, x) = acc;
    }
  return out;
}

Image box_downsample2(const Image& img) {
  const int h = img.height() / 2, w = img.width() / 2;
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(y, x) = 0.25 * (img.at(2 * y, 2 * x) + img.at(2 * y, 2 * x + 1) +
                             img.at(2 * y + 1, 2 * x) + img.at(2 * y + 1, 2 * x + 1));
  return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  Image out(out_h, out_w);
  if (img.empty() || out_h == 0 || out_w == 0) return out;
  const double sy = static_cast<double>(img.height()) / out_h;
  const double sx = static_cast<double>(img.width()) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    for (int x = 0; x < out_w; ++x) {
      const double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      out.at(y, x) = img.sample_bilinear(src_x, src_y);
    }
  }
  return out;
}

Image crop_image(const Image& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.height() || x0 + w > img.width())
    throw OutOfBoundsError("crop_image: window outside raster");
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = img.at(y0 + y, x0 + x);
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.at(y, x) = img.at(y, img.width() - 1 - x);
  return out;
}

Image flip_vertical(const Image& img) {
  Image out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.at(y, x) = img.at(img.height() - 1 - y, x);
  return out;
}

Image rotate90(const Image& img, int quarter_turns) {
  int k = ((quarter_turns % 4) + 4) % 4;
  Image out = img;
  while (k-- > 0) {
    Image rot(out.width(), out.height());
    for (int y = 0; y < rot.height(); ++y)
      for (int x = 0; x < rot.width(); ++x) rot.at(y, x) = out.at(out.height() - 1 - x, y);
    out = std::move(rot);
  }
  return out;
}

Image local_variance(const Image& img, int window) {
  const int h = img.height(), w = img.width();
  const int r = window / 2;
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0, s2 = 0.0;
      int n = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double v = img.at(reflect_index(y + dy, h), reflect_index(x + dx, w));
          s += v;
          s2 += v * v;
          ++n;
        }
      const double m = s / n;
      out.at(y, x) = std::max(0.0, s2 / n - m * m);
    }
  return out;
}

}  // namespace uta
