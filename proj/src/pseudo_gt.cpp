#include "uta/pseudo_gt.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

namespace uta {

std::vector<std::vector<int>> extract_signage_regions(const EventFrame& ev,
                                                      const ThermalFrame& ir,
                                                      const RegionExtractionConfig& cfg) {
  if (!ev.pixels.same_shape(ir))
    throw ShapeError("extract_signage_regions: event/thermal resolution mismatch");

  const auto denoised = denoise_spatiotemporal({ev}, cfg.denoise_radius, cfg.denoise_radius,
                                               cfg.denoise_radius, cfg.denoise_min_support);
  const Image& act = denoised[0].pixels;
  const int h = act.height(), w = act.width();

  const Image var = local_variance(ir, cfg.variance_window);

  std::vector<int> label(static_cast<size_t>(h) * w, -1);
  std::vector<std::vector<int>> regions;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int idx = y * w + x;
      if (act[idx] == 0.0 || label[idx] != -1) continue;
      // BFS over the 8-connected component.
      std::vector<int> comp;
      std::deque<int> queue{idx};
      label[idx] = static_cast<int>(regions.size());
      while (!queue.empty()) {
        const int cur = queue.front();
        queue.pop_front();
        comp.push_back(cur);
        const int cy = cur / w, cx = cur % w;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const int nidx = ny * w + nx;
            if (act[nidx] == 0.0 || label[nidx] != -1) continue;
            label[nidx] = label[idx];
            queue.push_back(nidx);
          }
      }
      if (static_cast<int>(comp.size()) < cfg.min_area) continue;
      int uniform = 0;
      for (int p : comp)
        if (var[p] < cfg.variance_threshold) ++uniform;
      if (uniform < cfg.uniform_fraction * comp.size()) continue;
      std::sort(comp.begin(), comp.end());
      regions.push_back(std::move(comp));
    }
  }
  return regions;
}

SignageMask build_mask(const std::vector<std::vector<int>>& regions, const Resolution& res) {
  SignageMask mask;
  mask.pixels = Image(res.height, res.width);
  mask.regions = regions;
  const int n = res.height * res.width;
  for (const auto& region : regions)
    for (int idx : region) {
      if (idx < 0 || idx >= n)
        throw OutOfBoundsError("build_mask: region index " + std::to_string(idx) +
                               " outside raster");
      mask.pixels[static_cast<size_t>(idx)] = 1.0;
    }
  return mask;
}

Image compose_sis_gt(const SignageMask& m, const EventFrame& i_ev, const ThermalFrame& i_ir) {
  if (!m.pixels.same_shape(i_ev.pixels) || !m.pixels.same_shape(i_ir))
    throw ShapeError("compose_sis_gt: shape mismatch");
  Image out(m.pixels.height(), m.pixels.width());
  for (size_t i = 0; i < out.size(); ++i) {
    const double mv = m.pixels[i];
    out[i] = mv * i_ev.pixels[i] + (1.0 - mv) * i_ir[i];
  }
  return out;
}

TccTarget build_tcc_gt(const std::vector<EventFrame>& ev_frames,
                       const std::vector<ThermalFrame>& ir_frames, const RigCalibration& rig,
                       int t_index, const TccGtConfig& cfg) {
  const int T = static_cast<int>(ev_frames.size());
  if (T < 1) throw Error("build_tcc_gt: empty group");
  if (static_cast<int>(ir_frames.size()) != T)
    throw ShapeError("build_tcc_gt: thermal/event frame count mismatch");
  if (t_index < 1 || t_index > T) throw Error("build_tcc_gt: t_index outside [1, T]");

  const int h = ev_frames[0].pixels.height(), w = ev_frames[0].pixels.width();
  Image votes(h, w);
  auto add_binarized = [&](const Image& img) {
    for (size_t i = 0; i < votes.size(); ++i)
      if (img[i] > 0.0) votes[i] += 1.0;
  };

  add_binarized(ev_frames[t_index - 1].pixels);
  for (int tp = 1; tp <= T; ++tp) {
    if (tp == t_index) continue;
    Homography p_ev = Homography::identity();
    if (!cfg.identity_motion) {
      const Homography p_ir =
          estimate_thermal_motion(ir_frames[tp - 1], ir_frames[t_index - 1], cfg.motion);
      p_ev = compose_relative_motion(p_ir, rig);
    }
    add_binarized(warp_event_frame(ev_frames[tp - 1], p_ev).pixels);
  }

  TccTarget target;
  target.t_index = t_index;
  target.group_len = T;
  target.vote_threshold = cfg.vote_threshold >= 0.0 ? cfg.vote_threshold : T / 2.0;
  target.pixels = Image(h, w);
  for (size_t i = 0; i < votes.size(); ++i)
    target.pixels[i] = votes[i] > target.vote_threshold ? 1.0 : 0.0;

  EventFrame wrapped;
  wrapped.pixels = target.pixels;
  target.pixels = denoise_spatiotemporal({wrapped}, cfg.denoise_radius, cfg.denoise_radius,
                                         cfg.denoise_radius, cfg.denoise_min_support)[0]
                      .pixels;
  return target;
}

}  // namespace uta
