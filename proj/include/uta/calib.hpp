#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "uta/events.hpp"
#include "uta/geometry.hpp"
#include "uta/image.hpp"

namespace uta {

/// Static geometry of the dual-camera rig. h_ir_to_ev maps thermal pixel
/// coordinates into event-camera pixel coordinates.
struct RigCalibration {
  Homography h_ir_to_ev;
  Resolution ir_resolution{640, 512};
  Resolution ev_resolution{346, 260};
};

/// Transfers thermal inter-frame motion onto the event camera:
/// h_ir_to_ev * h_ir_rel * h_ir_to_ev^-1, renormalized.
Homography compose_relative_motion(const Homography& h_ir_rel, const RigCalibration& rig);

struct MotionEstimationConfig {
  int max_corners = 400;
  int min_corners = 20;          // precondition on detectable corners
  double quality_level = 0.01;   // fraction of strongest corner response
  int min_corner_distance = 7;
  int patch_radius = 8;          // ZNCC patch half-size
  double match_search_radius = 24.0;
  double ransac_threshold_px = 1.5;
  int ransac_iterations = 500;
  int min_inliers = 12;
  double max_inlier_rms_px = 1.0;
  bool photometric_refine = true;
  std::uint64_t seed = 7;        // RANSAC sampling is deterministic
};

/// Robust projective fit mapping frame_prev pixel coordinates to frame_cur.
Homography estimate_thermal_motion(const ThermalFrame& frame_prev, const ThermalFrame& frame_cur,
                                   const MotionEstimationConfig& cfg = {});

/// Registers the event camera's grayscale view against a thermal frame.
/// Returns the homography mapping event-camera pixels into thermal pixel
/// coordinates (the inverse of RigCalibration.h_ir_to_ev).
Homography register_modalities(const Image& ev_gray, const ThermalFrame& ir_frame);

/// Fills a RigCalibration from a registration result and the two rasters.
RigCalibration make_rig_from_registration(const Homography& h_ev_to_ir, const Image& ev_gray,
                                          const ThermalFrame& ir_frame);

// Calibration file: JSON with keys `h_ir_to_ev` (9 floats row-major),
// `ir_resolution`, `ev_resolution` ([width, height]).
RigCalibration load_rig(const std::filesystem::path& path);
void save_rig(const std::filesystem::path& path, const RigCalibration& rig);

// Exposed for tests: Shi-Tomasi corners with non-maximum suppression.
struct Corner {
  double x = 0, y = 0, score = 0;
};
std::vector<Corner> detect_corners(const Image& img, int max_corners, double quality_level,
                                   int min_distance);

}  // namespace uta
