#pragma once

#include <filesystem>
#include <vector>

#include "uta/image.hpp"

namespace uta {

/// Shannon entropy (bits) of the 256-bin intensity histogram of a [0,1] image.
double entropy(const Image& img);

/// Population standard deviation on the 0-255 scale.
double std_dev(const Image& img);

/// Natural-scene-statistics model: multivariate Gaussian over 36 MSCN-derived
/// features (18 per scale, 2 scales).
struct NiqeModel {
  static constexpr int kFeatureDim = 36;
  std::vector<double> mean;        // 36
  std::vector<double> covariance;  // 36x36 row-major
  int patch_size = 32;
  double sharpness_fraction = 0.75;
};

struct NiqeOptions {
  int patch_size = 32;
  double sharpness_fraction = 0.75;
};

/// Fits the pristine-patch Gaussian from a set of [0,1] images.
NiqeModel fit_niqe(const std::vector<Image>& pristine, const NiqeOptions& opts = {});

/// Mahalanobis-type distance between the image's feature Gaussian and the
/// model Gaussian; lower is better.
double niqe(const Image& img, const NiqeModel& model);

/// Feature vector of one patch-aligned image region, exposed for tests.
std::vector<double> niqe_patch_features(const Image& patch_scale1, const Image& patch_scale2);

// Versioned binary container `UTASIGN-NIQE-v1`.
void save_niqe_model(const std::filesystem::path& path, const NiqeModel& model);
NiqeModel load_niqe_model(const std::filesystem::path& path);

}  // namespace uta
