#include "uta/calib.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

namespace uta {

Homography compose_relative_motion(const Homography& h_ir_rel, const RigCalibration& rig) {
  return rig.h_ir_to_ev * h_ir_rel * rig.h_ir_to_ev.inverse();
}

namespace {

struct Match {
  double x0, y0, x1, y1;
};

// Shi-Tomasi response: smaller eigenvalue of the 3x3-summed structure tensor.
Image corner_response(const Image& img) {
  const int h = img.height(), w = img.width();
  Image gx(h, w), gy(h, w);
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      gx.at(y, x) = 0.5 * (img.at(y, x + 1) - img.at(y, x - 1));
      gy.at(y, x) = 0.5 * (img.at(y + 1, x) - img.at(y - 1, x));
    }
  Image resp(h, w);
  for (int y = 2; y + 2 < h; ++y)
    for (int x = 2; x + 2 < w; ++x) {
      double sxx = 0, syy = 0, sxy = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const double ix = gx.at(y + dy, x + dx);
          const double iy = gy.at(y + dy, x + dx);
          sxx += ix * ix;
          syy += iy * iy;
          sxy += ix * iy;
        }
      const double tr = sxx + syy;
      const double det = sxx * syy - sxy * sxy;
      const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
      resp.at(y, x) = tr / 2.0 - disc;  // min eigenvalue
    }
  return resp;
}

}  // namespace

std::vector<Corner> detect_corners(const Image& img, int max_corners, double quality_level,
                                   int min_distance) {
  const Image resp = corner_response(img);
  const double max_resp = resp.max_value();
  if (max_resp <= 0.0) return {};
  const double thresh = quality_level * max_resp;

  const int h = img.height(), w = img.width();
  std::vector<Corner> cand;
  for (int y = 2; y + 2 < h; ++y)
    for (int x = 2; x + 2 < w; ++x) {
      const double v = resp.at(y, x);
      if (v < thresh) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          if (resp.at(y + dy, x + dx) > v) {
            is_max = false;
            break;
          }
        }
      if (!is_max) continue;
      // Subpixel: quadratic fit of the response along each axis.
      double sx = x, sy = y;
      const double dxm = resp.at(y, x - 1), dxp = resp.at(y, x + 1);
      const double dym = resp.at(y - 1, x), dyp = resp.at(y + 1, x);
      const double denx = dxm - 2 * v + dxp, deny = dym - 2 * v + dyp;
      if (std::abs(denx) > 1e-12) sx += std::clamp(0.5 * (dxm - dxp) / denx, -0.5, 0.5);
      if (std::abs(deny) > 1e-12) sy += std::clamp(0.5 * (dym - dyp) / deny, -0.5, 0.5);
      cand.push_back({sx, sy, v});
    }
  std::sort(cand.begin(), cand.end(), [](const Corner& a, const Corner& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.y, a.x) < std::tie(b.y, b.x);
  });

  std::vector<Corner> kept;
  const double min_d2 = static_cast<double>(min_distance) * min_distance;
  for (const Corner& c : cand) {
    bool ok = true;
    for (const Corner& k : kept) {
      const double d2 = (c.x - k.x) * (c.x - k.x) + (c.y - k.y) * (c.y - k.y);
      if (d2 < min_d2) {
        ok = false;
        break;
      }
    }
    if (ok) {
      kept.push_back(c);
      if (static_cast<int>(kept.size()) >= max_corners) break;
    }
  }
  return kept;
}

namespace {

double zncc(const Image& a, double ax, double ay, const Image& b, double bx, double by,
            int radius) {
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  const int n = (2 * radius + 1) * (2 * radius + 1);
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      const double va = a.sample_bilinear(ax + dx, ay + dy);
      const double vb = b.sample_bilinear(bx + dx, by + dy);
      sa += va;
      sb += vb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
    }
  const double var_a = saa - sa * sa / n;
  const double var_b = sbb - sb * sb / n;
  if (var_a <= 1e-12 || var_b <= 1e-12) return -1.0;
  return (sab - sa * sb / n) / std::sqrt(var_a * var_b);
}

std::vector<Match> match_corners(const Image& prev, const Image& cur,
                                 const std::vector<Corner>& c_prev,
                                 const std::vector<Corner>& c_cur,
                                 const MotionEstimationConfig& cfg) {
  std::vector<Match> matches;
  const double r2 = cfg.match_search_radius * cfg.match_search_radius;
  for (const Corner& p : c_prev) {
    double best = 0.6;  // NCC floor for an acceptable match
    const Corner* best_c = nullptr;
    for (const Corner& q : c_cur) {
      const double d2 = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y);
      if (d2 > r2) continue;
      const double score = zncc(prev, p.x, p.y, cur, q.x, q.y, cfg.patch_radius);
      if (score > best) {
        best = score;
        best_c = &q;
      }
    }
    if (best_c) matches.push_back({p.x, p.y, best_c->x, best_c->y});
  }
  return matches;
}

// Normalized DLT fit on point correspondences.
bool fit_homography_dlt(const std::vector<Match>& m, const std::vector<int>& idx,
                        Eigen::Matrix3d& out) {
  const int n = static_cast<int>(idx.size());
  if (n < 4) return false;

  auto normalizer = [&](bool second) {
    double mx = 0, my = 0;
    for (int i : idx) {
      mx += second ? m[i].x1 : m[i].x0;
      my += second ? m[i].y1 : m[i].y0;
    }
    mx /= n;
    my /= n;
    double md = 0;
    for (int i : idx) {
      const double dx = (second ? m[i].x1 : m[i].x0) - mx;
      const double dy = (second ? m[i].y1 : m[i].y0) - my;
      md += std::sqrt(dx * dx + dy * dy);
    }
    md /= n;
    const double s = md > 1e-12 ? std::sqrt(2.0) / md : 1.0;
    Eigen::Matrix3d T;
    T << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
    return T;
  };
  const Eigen::Matrix3d T0 = normalizer(false);
  const Eigen::Matrix3d T1 = normalizer(true);

  Eigen::MatrixXd A(2 * n, 9);
  for (int r = 0; r < n; ++r) {
    const Match& mm = m[idx[r]];
    const Eigen::Vector3d p0 = T0 * Eigen::Vector3d(mm.x0, mm.y0, 1.0);
    const Eigen::Vector3d p1 = T1 * Eigen::Vector3d(mm.x1, mm.y1, 1.0);
    const double x = p0(0), y = p0(1), u = p1(0), v = p1(1);
    A.row(2 * r) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    A.row(2 * r + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d H;
  H << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  H = T1.inverse() * H * T0;
  if (std::abs(H.determinant()) < Homography::kDetEps || std::abs(H(2, 2)) < 1e-12) return false;
  out = H / H(2, 2);
  return true;
}

double transfer_error(const Eigen::Matrix3d& H, const Match& m) {
  const Eigen::Vector3d p = H * Eigen::Vector3d(m.x0, m.y0, 1.0);
  if (std::abs(p(2)) < 1e-12) return 1e18;
  const double dx = p(0) / p(2) - m.x1;
  const double dy = p(1) / p(2) - m.y1;
  return std::sqrt(dx * dx + dy * dy);
}

// Dense pyramidal photometric refinement of H (prev -> cur). The 8 free
// entries are optimized in centered, unit-scaled coordinates so the normal
// equations stay well conditioned, with Marquardt damping on the diagonal.
Eigen::Matrix3d refine_photometric(const Image& prev, const Image& cur, Eigen::Matrix3d H) {
  std::vector<Image> pyr_prev{prev}, pyr_cur{cur};
  while (pyr_prev.back().height() >= 80 && pyr_prev.back().width() >= 80) {
    pyr_prev.push_back(box_downsample2(pyr_prev.back()));
    pyr_cur.push_back(box_downsample2(pyr_cur.back()));
  }

  for (int level = static_cast<int>(pyr_prev.size()) - 1; level >= 0; --level) {
    const Image& p = pyr_prev[level];
    const Image& c = pyr_cur[level];
    const double s = std::pow(0.5, level);
    Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
    S(0, 0) = S(1, 1) = s;
    Eigen::Matrix3d Hl = S * H * S.inverse();
    Hl /= Hl(2, 2);

    // Normalization: x_norm = (x - c) / scale.
    const double cx = 0.5 * (p.width() - 1), cy = 0.5 * (p.height() - 1);
    const double scale = 0.5 * std::max(p.width(), p.height());
    Eigen::Matrix3d T;
    T << 1.0 / scale, 0, -cx / scale, 0, 1.0 / scale, -cy / scale, 0, 0, 1;
    const Eigen::Matrix3d T_inv = T.inverse();
    Eigen::Matrix3d Hn = T * Hl * T_inv;
    Hn /= Hn(2, 2);

    auto eval_cost = [&](const Eigen::Matrix3d& Hc) {
      double cost = 0.0;
      int count = 0;
      for (int y = 1; y + 1 < p.height(); ++y) {
        const double yn = (y - cy) / scale;
        for (int x = 1; x + 1 < p.width(); ++x) {
          const double xn = (x - cx) / scale;
          const Eigen::Vector3d q = Hc * Eigen::Vector3d(xn, yn, 1.0);
          if (std::abs(q(2)) < 1e-9) continue;
          const double u = q(0) / q(2) * scale + cx, v = q(1) / q(2) * scale + cy;
          if (u < 1 || v < 1 || u > c.width() - 2 || v > c.height() - 2) continue;
          const double r = c.sample_bilinear(u, v) - p.at(y, x);
          cost += r * r;
          ++count;
        }
      }
      return count < 64 ? std::numeric_limits<double>::infinity() : cost / count;
    };

    double cur_cost = eval_cost(Hn);
    for (int iter = 0; iter < 60 && std::isfinite(cur_cost); ++iter) {
      Eigen::Matrix<double, 8, 8> JtJ = Eigen::Matrix<double, 8, 8>::Zero();
      Eigen::Matrix<double, 8, 1> Jtr = Eigen::Matrix<double, 8, 1>::Zero();
      for (int y = 1; y + 1 < p.height(); ++y) {
        const double yn = (y - cy) / scale;
        for (int x = 1; x + 1 < p.width(); ++x) {
          const double xn = (x - cx) / scale;
          const Eigen::Vector3d q = Hn * Eigen::Vector3d(xn, yn, 1.0);
          if (std::abs(q(2)) < 1e-9) continue;
          const double un = q(0) / q(2), vn = q(1) / q(2);
          const double u = un * scale + cx, v = vn * scale + cy;
          if (u < 1 || v < 1 || u > c.width() - 2 || v > c.height() - 2) continue;
          const double r = c.sample_bilinear(u, v) - p.at(y, x);
          // Image gradient per normalized unit.
          const double gx =
              0.5 * (c.sample_bilinear(u + 1, v) - c.sample_bilinear(u - 1, v)) * scale;
          const double gy =
              0.5 * (c.sample_bilinear(u, v + 1) - c.sample_bilinear(u, v - 1)) * scale;
          const double iz = 1.0 / q(2);
          Eigen::Matrix<double, 2, 8> dq;
          dq << xn * iz, yn * iz, iz, 0, 0, 0, -un * xn * iz, -un * yn * iz,
                0, 0, 0, xn * iz, yn * iz, iz, -vn * xn * iz, -vn * yn * iz;
          const Eigen::Matrix<double, 1, 8> J = gx * dq.row(0) + gy * dq.row(1);
          JtJ += J.transpose() * J;
          Jtr += J.transpose() * r;
        }
      }
      Eigen::Matrix<double, 8, 8> A = JtJ;
      A.diagonal() *= 1.0 + 1e-6;
      A.diagonal().array() += 1e-12;
      Eigen::Matrix<double, 8, 1> delta = A.ldlt().solve(-Jtr);
      if (!delta.allFinite()) break;

      // Step halving until the photometric cost improves.
      bool accepted = false;
      for (int half = 0; half < 6 && !accepted; ++half) {
        Eigen::Matrix3d trial = Hn;
        trial(0, 0) += delta(0);
        trial(0, 1) += delta(1);
        trial(0, 2) += delta(2);
        trial(1, 0) += delta(3);
        trial(1, 1) += delta(4);
        trial(1, 2) += delta(5);
        trial(2, 0) += delta(6);
        trial(2, 1) += delta(7);
        const double trial_cost = eval_cost(trial);
        if (trial_cost < cur_cost) {
          const double gain = cur_cost - trial_cost;
          Hn = trial;
          cur_cost = trial_cost;
          accepted = true;
          if (gain < 1e-15) iter = 60;  // converged
        } else {
          delta *= 0.5;
        }
      }
      if (!accepted) break;
    }
    Hl = T_inv * Hn * T;
    H = S.inverse() * Hl * S;
    H /= H(2, 2);
  }
  return H;
}

Eigen::Matrix3d ransac_homography(const std::vector<Match>& matches,
                                  const MotionEstimationConfig& cfg, std::vector<int>& inliers) {
  std::mt19937_64 rng(cfg.seed);
  const int n = static_cast<int>(matches.size());
  Eigen::Matrix3d best_H = Eigen::Matrix3d::Identity();
  int best_count = -1;

  std::vector<int> sample(4);
  for (int it = 0; it < cfg.ransac_iterations; ++it) {
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        sample[k] = static_cast<int>(rng() % n);
        fresh = true;
        for (int j = 0; j < k; ++j) fresh = fresh && sample[j] != sample[k];
      } while (!fresh);
    }
    Eigen::Matrix3d H;
    if (!fit_homography_dlt(matches, sample, H)) continue;
    int count = 0;
    for (int i = 0; i < n; ++i)
      if (transfer_error(H, matches[i]) < cfg.ransac_threshold_px) ++count;
    if (count > best_count) {
      best_count = count;
      best_H = H;
    }
  }
  if (best_count < cfg.min_inliers)
    throw DegenerateGeometryError("homography consensus too small: " +
                                  std::to_string(std::max(0, best_count)) + " inliers");

  inliers.clear();
  for (int i = 0; i < n; ++i)
    if (transfer_error(best_H, matches[i]) < cfg.ransac_threshold_px) inliers.push_back(i);
  Eigen::Matrix3d refit;
  if (fit_homography_dlt(matches, inliers, refit)) best_H = refit;
  return best_H;
}

}  // namespace

Homography estimate_thermal_motion(const ThermalFrame& frame_prev, const ThermalFrame& frame_cur,
                                   const MotionEstimationConfig& cfg) {
  if (!frame_prev.same_shape(frame_cur))
    throw ShapeError("estimate_thermal_motion: frames differ in resolution");

  const auto c_prev = detect_corners(frame_prev, cfg.max_corners, cfg.quality_level,
                                     cfg.min_corner_distance);
  const auto c_cur = detect_corners(frame_cur, cfg.max_corners, cfg.quality_level,
                                    cfg.min_corner_distance);
  if (static_cast<int>(c_prev.size()) < cfg.min_corners ||
      static_cast<int>(c_cur.size()) < cfg.min_corners)
    throw InsufficientFeaturesError("estimate_thermal_motion: fewer than " +
                                    std::to_string(cfg.min_corners) + " corners detected");

  const auto matches = match_corners(frame_prev, frame_cur, c_prev, c_cur, cfg);
  if (static_cast<int>(matches.size()) < std::max(4, cfg.min_inliers))
    throw InsufficientFeaturesError("estimate_thermal_motion: only " +
                                    std::to_string(matches.size()) + " correspondences");

  std::vector<int> inliers;
  Eigen::Matrix3d H = ransac_homography(matches, cfg, inliers);
  if (cfg.photometric_refine) H = refine_photometric(frame_prev, frame_cur, H);

  double rms = 0.0;
  for (int i : inliers) {
    const double e = transfer_error(H, matches[i]);
    rms += e * e;
  }
  rms = std::sqrt(rms / inliers.size());
  if (rms > cfg.max_inlier_rms_px)
    throw DegenerateGeometryError("estimate_thermal_motion: inlier RMS " + std::to_string(rms) +
                                  " px exceeds bound");
  return Homography(H);
}

Homography register_modalities(const Image& ev_gray, const ThermalFrame& ir_frame) {
  if (ev_gray.variance() < 1e-8 || ir_frame.variance() < 1e-8)
    throw InsufficientFeaturesError("register_modalities: constant raster has no features");

  // Coarse search over isotropic scale and integer shift on a strided pixel
  // grid, then dense photometric refinement of the full homography. The
  // candidate maps event pixels into thermal pixels: x_ir = s * x_ev + d.
  const double base = static_cast<double>(ir_frame.width()) / ev_gray.width();
  const int stride = std::max(1, ir_frame.width() / 48);
  const int shift_range = ir_frame.width() / 4;
  const int shift_step = std::max(1, ir_frame.width() / 40);

  double best_score = -2.0;
  Eigen::Matrix3d best_H = Eigen::Matrix3d::Identity();

  for (int k = -16; k <= 17; ++k) {
    const double s = base * std::pow(1.05, k);  // k = 0 hits the resolution ratio exactly
    for (int dy = -shift_range; dy <= shift_range; dy += shift_step) {
      for (int dx = -shift_range; dx <= shift_range; dx += shift_step) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        int count = 0;
        for (int y = 0; y < ir_frame.height(); y += stride)
          for (int x = 0; x < ir_frame.width(); x += stride) {
            const double u = (x - dx) / s;
            const double v = (y - dy) / s;
            if (u < 0 || v < 0 || u > ev_gray.width() - 1 || v > ev_gray.height() - 1) continue;
            const double a = ev_gray.sample_bilinear(u, v);
            const double b = ir_frame.at(y, x);
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
            ++count;
          }
        const int total = (ir_frame.height() / stride + 1) * (ir_frame.width() / stride + 1);
        if (count < total / 4) continue;
        const double var_a = saa - sa * sa / count;
        const double var_b = sbb - sb * sb / count;
        if (var_a <= 1e-12 || var_b <= 1e-12) continue;
        const double score = (sab - sa * sb / count) / std::sqrt(var_a * var_b);
        if (score > best_score) {
          best_score = score;
          Eigen::Matrix3d H = Eigen::Matrix3d::Identity();
          H(0, 0) = H(1, 1) = s;
          H(0, 2) = dx;
          H(1, 2) = dy;
          best_H = H;
        }
      }
    }
  }
  if (best_score < 0.1)
    throw InsufficientFeaturesError("register_modalities: no correlated alignment found");

  const Eigen::Matrix3d refined = refine_photometric(ev_gray, ir_frame, best_H);
  return Homography(refined);
}

RigCalibration make_rig_from_registration(const Homography& h_ev_to_ir, const Image& ev_gray,
                                          const ThermalFrame& ir_frame) {
  RigCalibration rig;
  rig.h_ir_to_ev = h_ev_to_ir.inverse();
  rig.ev_resolution = {ev_gray.width(), ev_gray.height()};
  rig.ir_resolution = {ir_frame.width(), ir_frame.height()};
  return rig;
}

RigCalibration load_rig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rig file " + path.string());
  nlohmann::json j;
  in >> j;
  RigCalibration rig;
  const auto& m = j.at("h_ir_to_ev");
  std::array<double, 9> rm{};
  for (int i = 0; i < 9; ++i) rm[i] = m.at(i).get<double>();
  rig.h_ir_to_ev = Homography(rm);
  rig.ir_resolution = {j.at("ir_resolution").at(0).get<int>(),
                       j.at("ir_resolution").at(1).get<int>()};
  rig.ev_resolution = {j.at("ev_resolution").at(0).get<int>(),
                       j.at("ev_resolution").at(1).get<int>()};
  if (rig.ir_resolution.width <= 0 || rig.ir_resolution.height <= 0 ||
      rig.ev_resolution.width <= 0 || rig.ev_resolution.height <= 0)
    throw Error("rig file: resolutions must be positive");
  return rig;
}

void save_rig(const std::filesystem::path& path, const RigCalibration& rig) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  nlohmann::json j;
  j["h_ir_to_ev"] = rig.h_ir_to_ev.row_major();
  j["ir_resolution"] = {rig.ir_resolution.width, rig.ir_resolution.height};
  j["ev_resolution"] = {rig.ev_resolution.width, rig.ev_resolution.height};
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

}  // namespace uta
