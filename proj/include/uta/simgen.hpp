#pragma once

#include <cstdint>
#include <vector>

#include "uta/calib.hpp"
#include "uta/events.hpp"
#include "uta/image.hpp"

namespace uta {

struct SimConfig {
  double contrast_threshold = 0.2;  // log-intensity units
  std::int64_t window_us = 30000;   // event aggregation window per frame
  int group_len = 7;                // frames per group
  double render_gain = 1.0 / 3.0;
  int quant_levels = 16;
  double blur_sigma = 1.0;
};

/// T temporally aligned (thermal, event) pairs; the unit of training.
struct FrameGroup {
  std::vector<ThermalFrame> thermal;
  std::vector<EventFrame> events;
  size_t size() const { return thermal.size(); }
};

/// Luminance -> 16-level quantization -> Gaussian blur -> renormalize to [0,1].
/// Same-material surfaces collapse onto one quantization level, which is what
/// makes signage vanish from the pseudo-thermal view.
ThermalFrame rgb_to_pseudo_thermal(const ColorImage& rgb, const SimConfig& cfg = {});

/// Contrast-threshold event synthesis on log intensities. Per pixel, one event
/// of polarity sign(delta) is emitted each time |log(I+eps) - log(I_ref+eps)|
/// crosses a multiple of the threshold; the reference updates per crossing and
/// timestamps interpolate linearly between frame times.
EventStream synthesize_events(const std::vector<Image>& frames,
                              const std::vector<std::int64_t>& timestamps_us,
                              const SimConfig& cfg = {});

/// Pairs pseudo-thermal frames with event frames aggregated over a centered
/// window around each frame instant. Frames are RGB scene captures.
FrameGroup make_group(const std::vector<ColorImage>& frames, const SimConfig& cfg,
                      const RigCalibration& rig);

// --- Synthetic demo scenes -------------------------------------------------
// Self-contained moving scenes used by tests, the acceptance suite and the
// CLI demo path: a textured background translating at constant velocity with
// a signage glyph whose intensity falls into the same pseudo-thermal
// quantization bin as its backing plate (thermally invisible, event-active).

struct DemoSceneConfig {
  int width = 96;
  int height = 96;
  int n_frames = 14;
  double dx_per_frame = 2.0;
  double dy_per_frame = 0.0;
  std::uint64_t seed = 1;
};

std::vector<ColorImage> make_demo_scene(const DemoSceneConfig& cfg);

/// Bounding box of the glyph strokes in frame k (pixel coordinates), for
/// tests that need to look at the signage region specifically.
struct GlyphBox {
  int x0, y0, x1, y1;
};
GlyphBox demo_glyph_box(const DemoSceneConfig& cfg, int frame_index);

}  // namespace uta
