#include "uta/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace uta {

void require_sorted(const EventStream& stream) {
  for (size_t i = 1; i < stream.size(); ++i)
    if (stream[i].t_us < stream[i - 1].t_us)
      throw UnsortedStreamError("event stream not sorted by t_us at record " + std::to_string(i));
}

std::vector<EventStream> partition_stream(const EventStream& stream, const FrameClock& clock,
                                          int n_frames) {
  if (clock.period_us <= 0) throw Error("FrameClock.period_us must be positive");
  require_sorted(stream);
  std::vector<EventStream> slices(std::max(0, n_frames));
  for (const EventRecord& e : stream) {
    const std::int64_t rel = e.t_us - clock.t0_us;
    if (rel < 0) continue;
    const std::int64_t k = rel / clock.period_us;
    if (k >= n_frames) continue;
    slices[static_cast<size_t>(k)].push_back(e);
  }
  return slices;
}

EventFrame render_frame(const EventStream& slice, const Resolution& res, double gain,
                        std::int64_t t_start_us, std::int64_t t_end_us) {
  EventFrame out;
  out.pixels = Image(res.height, res.width);
  out.t_start_us = t_start_us;
  out.t_end_us = std::max(t_end_us, t_start_us + 1);
  for (const EventRecord& e : slice) {
    if (e.x >= res.width || e.y >= res.height)
      throw OutOfBoundsError("event at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                             ") outside " + std::to_string(res.width) + "x" +
                             std::to_string(res.height));
    out.pixels.at(e.y, e.x) += gain;
  }
  out.pixels.clamp01();
  return out;
}

std::vector<EventFrame> denoise_spatiotemporal(const std::vector<EventFrame>& frames, int dt,
                                               int dy, int dx, int min_support) {
  if (min_support < 1) throw Error("denoise: min_support must be >= 1");
  const int n = static_cast<int>(frames.size());
  if (n == 0) return {};
  for (int i = 1; i < n; ++i)
    if (!frames[i].pixels.same_shape(frames[0].pixels))
      throw ShapeError("denoise: mismatched frame resolutions");

  const int h = frames[0].pixels.height(), w = frames[0].pixels.width();
  std::vector<EventFrame> out = frames;
  for (int t = 0; t < n; ++t) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (frames[t].pixels.at(y, x) == 0.0) continue;
        int support = 0;
        for (int tt = std::max(0, t - dt); tt <= std::min(n - 1, t + dt) && support < min_support;
             ++tt) {
          for (int yy = std::max(0, y - dy); yy <= std::min(h - 1, y + dy); ++yy) {
            for (int xx = std::max(0, x - dx); xx <= std::min(w - 1, x + dx); ++xx) {
              if (tt == t && yy == y && xx == x) continue;
              if (frames[tt].pixels.at(yy, xx) != 0.0) {
                if (++support >= min_support) break;
              }
            }
            if (support >= min_support) break;
          }
        }
        if (support < min_support) out[t].pixels.at(y, x) = 0.0;
      }
    }
  }
  return out;
}

Image warp_image(const Image& img, const Homography& h) {
  const Homography inv = h.inverse();
  Image out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double sx = 0.0, sy = 0.0;
      inv.apply(static_cast<double>(x), static_cast<double>(y), sx, sy);
      out.at(y, x) = img.sample_bilinear(sx, sy);
    }
  out.clamp01();
  return out;
}

EventFrame warp_event_frame(const EventFrame& frame, const Homography& h) {
  EventFrame out = frame;
  out.pixels = warp_image(frame.pixels, h);
  return out;
}

EventStream read_events_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty event file " + path.string());
  EventStream stream;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EventRecord e;
    long long t;
    int x, y, p;
    if (std::sscanf(line.c_str(), "%lld,%d,%d,%d", &t, &x, &y, &p) != 4)
      throw IoError("malformed event row: " + line);
    e.t_us = t;
    e.x = static_cast<std::uint16_t>(x);
    e.y = static_cast<std::uint16_t>(y);
    e.polarity = static_cast<std::int8_t>(p);
    stream.push_back(e);
  }
  require_sorted(stream);
  return stream;
}

void write_events_csv(const std::filesystem::path& path, const EventStream& stream) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "t_us,x,y,p\n";
  for (const EventRecord& e : stream)
    out << e.t_us << ',' << e.x << ',' << e.y << ',' << static_cast<int>(e.polarity) << '\n';
}

namespace {

#pragma pack(push, 1)
struct PackedEvent {
  std::uint64_t t;
  std::uint16_t x;
  std::uint16_t y;
  std::int8_t p;
};
#pragma pack(pop)
static_assert(sizeof(PackedEvent) == 13, "packed event record must be 13 bytes");

}  // namespace

EventStream read_events_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  EventStream stream;
  PackedEvent rec;
  while (in.read(reinterpret_cast<char*>(&rec), sizeof(rec))) {
    EventRecord e;
    e.t_us = static_cast<std::int64_t>(rec.t);
    e.x = rec.x;
    e.y = rec.y;
    e.polarity = rec.p;
    stream.push_back(e);
  }
  require_sorted(stream);
  return stream;
}

void write_events_bin(const std::filesystem::path& path, const EventStream& stream) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const EventRecord& e : stream) {
    PackedEvent rec{static_cast<std::uint64_t>(e.t_us), e.x, e.y, e.polarity};
    out.write(reinterpret_cast<const char*>(&rec), sizeof(rec));
  }
}

EventStream read_events(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".bin") return read_events_bin(path);
  return read_events_csv(path);
}

}  // namespace uta
