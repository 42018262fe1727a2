#include "uta/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace uta {

namespace {
constexpr double kLogEps = 1e-3;
}

ThermalFrame rgb_to_pseudo_thermal(const ColorImage& rgb, const SimConfig& cfg) {
  Image lum = rgb.luminance();
  const int levels = std::max(2, cfg.quant_levels);
  for (size_t i = 0; i < lum.size(); ++i) {
    const double v = std::clamp(lum[i], 0.0, 1.0);
    const int q = std::min(levels - 1, static_cast<int>(v * levels));
    lum[i] = static_cast<double>(q) / (levels - 1);
  }
  Image out = gaussian_blur(lum, cfg.blur_sigma);
  const double lo = out.min_value(), hi = out.max_value();
  if (hi - lo > 1e-12)
    for (size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - lo) / (hi - lo);
  out.clamp01();
  return out;
}

EventStream synthesize_events(const std::vector<Image>& frames,
                              const std::vector<std::int64_t>& timestamps_us,
                              const SimConfig& cfg) {
  if (frames.size() != timestamps_us.size())
    throw Error("synthesize_events: frame/timestamp count mismatch");
  if (frames.size() < 2) return {};
  for (size_t i = 1; i < frames.size(); ++i) {
    if (!frames[i].same_shape(frames[0]))
      throw ShapeError("synthesize_events: frame resolution mismatch");
    if (timestamps_us[i] <= timestamps_us[i - 1])
      throw Error("synthesize_events: non-monotonic timestamps");
  }
  const double C = cfg.contrast_threshold;
  if (C <= 0.0) throw Error("synthesize_events: contrast threshold must be positive");

  const int h = frames[0].height(), w = frames[0].width();
  EventStream stream;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double ref = std::log(frames[0].at(y, x) + kLogEps);
      for (size_t k = 0; k + 1 < frames.size(); ++k) {
        const double l0 = std::log(frames[k].at(y, x) + kLogEps);
        const double l1 = std::log(frames[k + 1].at(y, x) + kLogEps);
        if (l1 == l0 && std::abs(l1 - ref) < C) continue;
        const std::int64_t t0 = timestamps_us[k], t1 = timestamps_us[k + 1];
        while (std::abs(l1 - ref) >= C) {
          const double dir = l1 > ref ? 1.0 : -1.0;
          ref += dir * C;
          double frac = (l1 != l0) ? (ref - l0) / (l1 - l0) : 1.0;
          frac = std::clamp(frac, 0.0, 1.0);
          EventRecord e;
          e.t_us = t0 + static_cast<std::int64_t>(std::llround(frac * (t1 - t0)));
          e.x = static_cast<std::uint16_t>(x);
          e.y = static_cast<std::uint16_t>(y);
          e.polarity = dir > 0 ? 1 : -1;
          stream.push_back(e);
        }
      }
    }
  }
  std::sort(stream.begin(), stream.end(), [](const EventRecord& a, const EventRecord& b) {
    return std::tie(a.t_us, a.y, a.x, a.polarity) < std::tie(b.t_us, b.y, b.x, b.polarity);
  });
  return stream;
}

FrameGroup make_group(const std::vector<ColorImage>& frames, const SimConfig& cfg,
                      const RigCalibration& rig) {
  if (static_cast<int>(frames.size()) < cfg.group_len)
    throw Error("make_group: need at least group_len frames");

  std::vector<Image> lum;
  std::vector<std::int64_t> ts;
  lum.reserve(frames.size());
  for (size_t k = 0; k < frames.size(); ++k) {
    lum.push_back(frames[k].luminance());
    ts.push_back(static_cast<std::int64_t>(k) * cfg.window_us);
  }
  const EventStream events = synthesize_events(lum, ts, cfg);

  const bool registered = rig.h_ir_to_ev.approx_equal(Homography::identity(), 1e-12);
  const Resolution res{frames[0].width(), frames[0].height()};

  FrameGroup group;
  for (int k = 0; k < cfg.group_len; ++k) {
    group.thermal.push_back(rgb_to_pseudo_thermal(frames[k], cfg));
    const std::int64_t t_lo = ts[k] - cfg.window_us / 2;
    const std::int64_t t_hi = ts[k] + cfg.window_us / 2;
    EventStream slice;
    for (const EventRecord& e : events)
      if (e.t_us >= t_lo && e.t_us < t_hi) slice.push_back(e);
    EventFrame ef = render_frame(slice, res, cfg.render_gain, t_lo, t_hi);
    if (!registered) ef = warp_event_frame(ef, rig.h_ir_to_ev.inverse());
    group.events.push_back(std::move(ef));
  }
  return group;
}

namespace {

struct Canvas {
  Image r, g, b;
};

void paint_rect(Canvas& c, int x0, int y0, int x1, int y1, double lr, double lg, double lb) {
  for (int y = std::max(0, y0); y < std::min(c.r.height(), y1); ++y)
    for (int x = std::max(0, x0); x < std::min(c.r.width(), x1); ++x) {
      c.r.at(y, x) = lr;
      c.g.at(y, x) = lg;
      c.b.at(y, x) = lb;
    }
}

// Solves for rgb with the requested Rec.601 luminance and a given hue mix;
// falls back to gray when the hue would push a channel out of range.
void paint_rect_lum(Canvas& c, int x0, int y0, int x1, int y1, double lum, double warm) {
  double r = lum * (0.7 + 0.6 * warm);
  double b = lum * (1.9 - 1.2 * warm);
  double g = (lum - 0.299 * r - 0.114 * b) / 0.587;
  if (r < 0 || r > 1 || g < 0 || g > 1 || b < 0 || b > 1) r = g = b = lum;
  paint_rect(c, x0, y0, x1, y1, r, g, b);
}

constexpr double kPlateLum = 0.085;   // quantization bin 1 of 16
constexpr double kGlyphLum = 0.118;   // same bin, ~0.32 apart in log intensity

struct DemoLayout {
  int canvas_w, canvas_h;
  int ox, oy;          // frame-0 origin inside the canvas
  int plate_x, plate_y, plate_w, plate_h;
};

DemoLayout demo_layout(const DemoSceneConfig& cfg) {
  DemoLayout l;
  const int span_x = static_cast<int>(std::ceil(std::abs(cfg.dx_per_frame) * cfg.n_frames)) + 8;
  const int span_y = static_cast<int>(std::ceil(std::abs(cfg.dy_per_frame) * cfg.n_frames)) + 8;
  l.canvas_w = cfg.width + 2 * span_x;
  l.canvas_h = cfg.height + 2 * span_y;
  l.ox = span_x;
  l.oy = span_y;
  l.plate_w = std::max(24, cfg.width / 3);
  l.plate_h = std::max(18, cfg.height / 4);
  l.plate_x = l.ox + cfg.width / 2 - l.plate_w / 2;
  l.plate_y = l.oy + cfg.height / 2 - l.plate_h / 2;
  return l;
}

Canvas paint_demo_canvas(const DemoSceneConfig& cfg, const DemoLayout& l) {
  Canvas c{Image(l.canvas_h, l.canvas_w), Image(l.canvas_h, l.canvas_w),
           Image(l.canvas_h, l.canvas_w)};
  paint_rect_lum(c, 0, 0, l.canvas_w, l.canvas_h, 0.53, 0.5);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> px(0, l.canvas_w - 1), py(0, l.canvas_h - 1);
  std::uniform_int_distribution<int> sz(6, 22);
  std::uniform_int_distribution<int> bin(3, 14);
  std::uniform_real_distribution<double> warm(0.0, 1.0);
  const int n_blocks = std::clamp(l.canvas_w * l.canvas_h / 350, 30, 160);
  for (int i = 0; i < n_blocks; ++i) {
    const int x0 = px(rng), y0 = py(rng), w = sz(rng), h = sz(rng);
    const double lum = (bin(rng) + 0.5) / 16.0;
    // Keep the plate area clear of background clutter.
    if (x0 + w >= l.plate_x - 4 && x0 <= l.plate_x + l.plate_w + 4 &&
        y0 + h >= l.plate_y - 4 && y0 <= l.plate_y + l.plate_h + 4)
      continue;
    paint_rect_lum(c, x0, y0, x0 + w, y0 + h, lum, warm(rng));
  }

  // Signage plate with same-bin glyph strokes: invisible after quantization,
  // strong log-intensity contrast for the event simulator.
  paint_rect_lum(c, l.plate_x, l.plate_y, l.plate_x + l.plate_w, l.plate_y + l.plate_h,
                 kPlateLum, 0.1);
  const int sx = l.plate_x + 3, sy = l.plate_y + 3;
  const int sw = l.plate_w - 6, sh = l.plate_h - 6;
  const int bar = std::max(2, sh / 7);
  // Three horizontal bars and one vertical stem, an "E"-like glyph.
  paint_rect_lum(c, sx, sy, sx + sw, sy + bar, kGlyphLum, 0.9);
  paint_rect_lum(c, sx, sy + (sh - bar) / 2, sx + 2 * sw / 3, sy + (sh - bar) / 2 + bar,
                 kGlyphLum, 0.9);
  paint_rect_lum(c, sx, sy + sh - bar, sx + sw, sy + sh, kGlyphLum, 0.9);
  paint_rect_lum(c, sx, sy, sx + bar, sy + sh, kGlyphLum, 0.9);
  return c;
}

}  // namespace

std::vector<ColorImage> make_demo_scene(const DemoSceneConfig& cfg) {
  const DemoLayout l = demo_layout(cfg);
  const Canvas canvas = paint_demo_canvas(cfg, l);

  std::vector<ColorImage> frames;
  frames.reserve(cfg.n_frames);
  for (int k = 0; k < cfg.n_frames; ++k) {
    const double off_x = l.ox + k * cfg.dx_per_frame;
    const double off_y = l.oy + k * cfg.dy_per_frame;
    ColorImage f{Image(cfg.height, cfg.width), Image(cfg.height, cfg.width),
                 Image(cfg.height, cfg.width)};
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) {
        f.r.at(y, x) = canvas.r.sample_bilinear(x + off_x, y + off_y);
        f.g.at(y, x) = canvas.g.sample_bilinear(x + off_x, y + off_y);
        f.b.at(y, x) = canvas.b.sample_bilinear(x + off_x, y + off_y);
      }
    frames.push_back(std::move(f));
  }
  return frames;
}

GlyphBox demo_glyph_box(const DemoSceneConfig& cfg, int frame_index) {
  const DemoLayout l = demo_layout(cfg);
  const int fx = static_cast<int>(std::floor(l.plate_x - l.ox - frame_index * cfg.dx_per_frame));
  const int fy = static_cast<int>(std::floor(l.plate_y - l.oy - frame_index * cfg.dy_per_frame));
  return {std::clamp(fx, 0, cfg.width), std::clamp(fy, 0, cfg.height),
          std::clamp(fx + l.plate_w, 0, cfg.width), std::clamp(fy + l.plate_h, 0, cfg.height)};
}

}  // namespace uta
