#pragma once

#include <vector>

#include "uta/calib.hpp"
#include "uta/events.hpp"
#include "uta/image.hpp"

namespace uta {

/// Binary raster selecting semantic regions, kept together with the pixel
/// index sets (row-major indices) it was built from.
struct SignageMask {
  Image pixels;  // 0/1
  std::vector<std::vector<int>> regions;
};

/// Warp-and-vote temporal target for one frame of a group.
struct TccTarget {
  Image pixels;  // 0/1
  int t_index = 1;
  int group_len = 1;
  double vote_threshold = 0.5;
};

struct RegionExtractionConfig {
  int min_area = 25;
  int variance_window = 7;
  double variance_threshold = 1e-3;
  double uniform_fraction = 0.5;  // component pixels that must sit on flat thermal
  int denoise_min_support = 2;
  int denoise_radius = 1;
};

/// Connected components of denoised event activity over thermally uniform
/// areas. Components smaller than min_area are discarded. May return empty.
std::vector<std::vector<int>> extract_signage_regions(const EventFrame& ev,
                                                      const ThermalFrame& ir,
                                                      const RegionExtractionConfig& cfg = {});

/// Mask pixel = 1 iff the pixel belongs to any region.
SignageMask build_mask(const std::vector<std::vector<int>>& regions, const Resolution& res);

/// Pixelwise M * I_EV + (1 - M) * I_IR, exact.
Image compose_sis_gt(const SignageMask& m, const EventFrame& i_ev, const ThermalFrame& i_ir);

struct TccGtConfig {
  double vote_threshold = -1.0;  // < 0 means the default T/2
  int denoise_min_support = 2;
  int denoise_radius = 1;
  MotionEstimationConfig motion;
  bool identity_motion = false;  // skip motion estimation (static or pre-aligned stacks)
};

/// Estimates thermal motion t'->t for every reference frame, transfers it to
/// the event camera, warps, binarizes, votes against the threshold and
/// denoises the result. t_index is 1-based, in [1, T].
TccTarget build_tcc_gt(const std::vector<EventFrame>& ev_frames,
                       const std::vector<ThermalFrame>& ir_frames, const RigCalibration& rig,
                       int t_index, const TccGtConfig& cfg = {});

}  // namespace uta
