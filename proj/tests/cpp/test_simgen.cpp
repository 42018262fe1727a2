#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "uta/simgen.hpp"

using namespace uta;

namespace {

ColorImage solid(int h, int w, double r, double g, double b) {
  return {Image(h, w, r), Image(h, w, g), Image(h, w, b)};
}

std::vector<Image> single_pixel_video(const std::vector<double>& values) {
  std::vector<Image> frames;
  for (double v : values) frames.push_back(Image(1, 1, v));
  return frames;
}

std::vector<std::int64_t> uniform_times(size_t n, std::int64_t dt = 1000) {
  std::vector<std::int64_t> t;
  for (size_t i = 0; i < n; ++i) t.push_back(static_cast<std::int64_t>(i) * dt);
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("simgen");

TEST_CASE("rgb_to_pseudo_thermal") {
  SUBCASE("constant input stays constant") {
    const ThermalFrame out = rgb_to_pseudo_thermal(solid(16, 16, 0.42, 0.42, 0.42));
    CHECK(out.max_value() == doctest::Approx(out.min_value()));
  }
  SUBCASE("black/white step keeps two plateaus away from the edge") {
    ColorImage img = solid(16, 32, 0.0, 0.0, 0.0);
    for (int y = 0; y < 16; ++y)
      for (int x = 16; x < 32; ++x) img.r.at(y, x) = img.g.at(y, x) = img.b.at(y, x) = 1.0;
    const ThermalFrame out = rgb_to_pseudo_thermal(img);
    std::set<double> plateau;
    for (int y = 0; y < 16; ++y) {
      plateau.insert(out.at(y, 2));
      plateau.insert(out.at(y, 29));
    }
    CHECK(plateau.size() == 2);
    CHECK(*plateau.begin() == doctest::Approx(0.0));
    CHECK(*plateau.rbegin() == doctest::Approx(1.0));
    // Blurred boundary: intermediate value right at the step.
    CHECK(out.at(8, 16) > 0.05);
    CHECK(out.at(8, 16) < 0.95);
  }
  SUBCASE("equal-luminance glyph vanishes") {
    // Chroma differs, Rec.601 luminance identical -> one quantization level.
    ColorImage img = solid(20, 20, 0.3, 0.5, 0.2);
    const double lum = 0.299 * 0.3 + 0.587 * 0.5 + 0.114 * 0.2;
    const double r2 = 0.5;
    const double b2 = 0.25;
    const double g2 = (lum - 0.299 * r2 - 0.114 * b2) / 0.587;
    for (int y = 8; y < 12; ++y)
      for (int x = 4; x < 16; ++x) {
        img.r.at(y, x) = r2;
        img.g.at(y, x) = g2;
        img.b.at(y, x) = b2;
      }
    const ThermalFrame out = rgb_to_pseudo_thermal(img);
    CHECK(out.max_value() - out.min_value() < 1e-9);
  }
}

TEST_CASE("synthesize_events crossing counts") {
  SimConfig cfg;
  cfg.contrast_threshold = 0.2;

  SUBCASE("constant sequence emits nothing") {
    const auto stream =
        synthesize_events(single_pixel_video({0.4, 0.4, 0.4, 0.4}), uniform_times(4), cfg);
    CHECK(stream.empty());
  }
  SUBCASE("a 2.5-threshold log step emits exactly two positive events") {
    const double i0 = 0.2;
    const double i1 = (i0 + 1e-3) * std::exp(2.5 * cfg.contrast_threshold) - 1e-3;
    const auto stream = synthesize_events(single_pixel_video({i0, i1}), uniform_times(2), cfg);
    REQUIRE(stream.size() == 2);
    CHECK(stream[0].polarity == 1);
    CHECK(stream[1].polarity == 1);
    CHECK(stream[0].t_us <= stream[1].t_us);
  }
  SUBCASE("symmetric up-down ramp balances polarities") {
    const auto stream = synthesize_events(
        single_pixel_video({0.1, 0.3, 0.7, 0.3, 0.1}), uniform_times(5), cfg);
    int pos = 0, neg = 0;
    for (const auto& e : stream) (e.polarity > 0 ? pos : neg)++;
    CHECK(pos == neg);
    CHECK(pos > 0);
  }
  SUBCASE("intensity scaling leaves counts almost unchanged (log domain)") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> v(0.05, 0.5);
    std::vector<double> base;
    for (int i = 0; i < 10; ++i) base.push_back(v(rng));
    std::vector<double> scaled;
    for (double x : base) scaled.push_back(std::min(1.0, 1.9 * x));
    const auto a = synthesize_events(single_pixel_video(base), uniform_times(10), cfg);
    const auto b = synthesize_events(single_pixel_video(scaled), uniform_times(10), cfg);
    CHECK(std::abs(static_cast<int>(a.size()) - static_cast<int>(b.size())) <= 1);
  }
  SUBCASE("net event count equals the rounded log step end to end") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> iv(0.05, 0.9), cv(0.05, 0.5);
    for (int trial = 0; trial < 100; ++trial) {
      SimConfig c;
      c.contrast_threshold = cv(rng);
      const double i0 = iv(rng), i1 = iv(rng);
      const auto stream = synthesize_events(single_pixel_video({i0, i1}), uniform_times(2), c);
      const double dlog = std::log(i1 + 1e-3) - std::log(i0 + 1e-3);
      const int want = static_cast<int>(std::floor(std::abs(dlog) / c.contrast_threshold));
      CHECK(static_cast<int>(stream.size()) == want);
      for (const auto& e : stream) CHECK(e.polarity == (dlog > 0 ? 1 : -1));
    }
  }
  SUBCASE("non-monotonic timestamps throw") {
    CHECK_THROWS_AS(
        synthesize_events(single_pixel_video({0.1, 0.2}), {1000, 1000}, cfg), Error);
  }
}

TEST_CASE("make_group alignment") {
  SimConfig cfg;
  RigCalibration rig;
  rig.h_ir_to_ev = Homography::identity();

  SUBCASE("seven frames in, seven pairs out") {
    DemoSceneConfig dc;
    dc.n_frames = 7;
    const auto frames = make_demo_scene(dc);
    const FrameGroup group = make_group(frames, cfg, rig);
    CHECK(group.size() == 7);
    CHECK(group.thermal[0].height() == dc.height);
    CHECK(group.events[0].pixels.height() == dc.height);
  }
  SUBCASE("static scene produces empty event frames") {
    std::vector<ColorImage> frames(7, solid(32, 32, 0.4, 0.35, 0.3));
    const FrameGroup group = make_group(frames, cfg, rig);
    for (const auto& ef : group.events) CHECK(ef.pixels.max_value() == 0.0);
  }
  SUBCASE("too few frames throw") {
    std::vector<ColorImage> frames(3, solid(16, 16, 0.4, 0.4, 0.4));
    CHECK_THROWS_AS(make_group(frames, cfg, rig), Error);
  }
  SUBCASE("moving scene fires only near moving edges") {
    DemoSceneConfig dc;
    dc.n_frames = 8;
    dc.dx_per_frame = 2.0;
    const auto frames = make_demo_scene(dc);
    const FrameGroup group = make_group(frames, cfg, rig);

    // Finite-difference edge oracle: pixels with events must be near a large
    // temporal luminance change; interior flat pixels must stay silent.
    const Image lum_a = frames[2].luminance();
    const Image lum_b = frames[3].luminance();
    const EventFrame& ef = group.events[3];
    int checked = 0;
    for (int y = 2; y < dc.height - 2; ++y)
      for (int x = 2; x < dc.width - 2; ++x) {
        if (ef.pixels.at(y, x) == 0.0) continue;
        double biggest = 0.0;
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx)
            biggest = std::max(biggest, std::abs(std::log(lum_b.at(y + dy, x + dx) + 1e-3) -
                                                 std::log(lum_a.at(y + dy, x + dx) + 1e-3)));
        CHECK(biggest >= cfg.contrast_threshold * 0.99);
        ++checked;
      }
    CHECK(checked > 20);  // the scene is genuinely event-active
  }
}

TEST_CASE("demo scene: thermally hidden, event-visible glyph") {
  DemoSceneConfig dc;
  dc.n_frames = 8;
  const auto frames = make_demo_scene(dc);
  SimConfig cfg;
  RigCalibration rig;
  const FrameGroup group = make_group(frames, cfg, rig);

  const GlyphBox box = demo_glyph_box(dc, 3);
  REQUIRE(box.x1 > box.x0 + 4);

  // Pseudo-thermal view: the plate interior is one flat level (glyph gone).
  const ThermalFrame& ir = group.thermal[3];
  double lo = 1e9, hi = -1e9;
  for (int y = box.y0 + 4; y < box.y1 - 4; ++y)
    for (int x = box.x0 + 4; x < box.x1 - 4; ++x) {
      lo = std::min(lo, ir.at(y, x));
      hi = std::max(hi, ir.at(y, x));
    }
  CHECK(hi - lo < 1e-6);

  // Event view: strokes fire inside the plate.
  double activity = 0.0;
  for (int y = box.y0; y < box.y1; ++y)
    for (int x = box.x0; x < box.x1; ++x) activity += group.events[3].pixels.at(y, x);
  CHECK(activity > 1.0);
}

TEST_SUITE_END();
