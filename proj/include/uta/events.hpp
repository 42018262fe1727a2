#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "uta/geometry.hpp"
#include "uta/image.hpp"

namespace uta {

/// One asynchronous brightness-change record.
struct EventRecord {
  std::int64_t t_us = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t polarity = 1;  // -1 or +1

  bool operator==(const EventRecord& o) const {
    return t_us == o.t_us && x == o.x && y == o.y && polarity == o.polarity;
  }
};

using EventStream = std::vector<EventRecord>;

/// Ticks of the thermal camera that slice the event stream.
struct FrameClock {
  std::int64_t period_us = 20000;  // 50 fps
  std::int64_t t0_us = 0;
};

struct Resolution {
  int width = 0;
  int height = 0;
};

void require_sorted(const EventStream& stream);

/// Slice k holds records with t in [t0 + k*period, t0 + (k+1)*period).
std::vector<EventStream> partition_stream(const EventStream& stream, const FrameClock& clock,
                                          int n_frames);

/// Rasterizes a slice: pixel = clip(event count * gain, 0, 1), polarity ignored.
EventFrame render_frame(const EventStream& slice, const Resolution& res, double gain = 1.0 / 3.0,
                        std::int64_t t_start_us = 0, std::int64_t t_end_us = 1);

/// Keeps a nonzero pixel iff its (2dt+1)x(2dy+1)x(2dx+1) spatiotemporal
/// neighborhood (itself excluded) holds >= min_support nonzero pixels of the
/// input stack. Zero pixels pass through. Single pass over the input counts.
std::vector<EventFrame> denoise_spatiotemporal(const std::vector<EventFrame>& frames, int dt,
                                               int dy, int dx, int min_support);

/// Inverse-mapping warp with bilinear sampling; out-of-source pixels become 0.
/// Content moves with h: output(h(p)) ~= input(p).
EventFrame warp_event_frame(const EventFrame& frame, const Homography& h);
Image warp_image(const Image& img, const Homography& h);

// Event file formats: CSV with header `t_us,x,y,p` and a packed little-endian
// binary variant of (uint64 t, uint16 x, uint16 y, int8 p) records.
EventStream read_events_csv(const std::filesystem::path& path);
void write_events_csv(const std::filesystem::path& path, const EventStream& stream);
EventStream read_events_bin(const std::filesystem::path& path);
void write_events_bin(const std::filesystem::path& path, const EventStream& stream);

/// Dispatches on extension: ".csv" or ".bin".
EventStream read_events(const std::filesystem::path& path);

}  // namespace uta
