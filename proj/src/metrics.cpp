#include "uta/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

namespace uta {

double entropy(const Image& img) {
  if (img.empty()) return 0.0;
  std::array<double, 256> hist{};
  for (size_t i = 0; i < img.size(); ++i) {
    const int bin = std::min(255, static_cast<int>(std::clamp(img[i], 0.0, 1.0) * 256.0));
    hist[bin] += 1.0;
  }
  const double n = static_cast<double>(img.size());
  double h = 0.0;
  for (double c : hist) {
    if (c == 0.0) continue;
    const double p = c / n;
    h -= p * std::log2(p);
  }
  return h;
}

double std_dev(const Image& img) { return 255.0 * std::sqrt(img.variance()); }

// ---------------------------------------------------------------------------
// NIQE
// ---------------------------------------------------------------------------

namespace {

// Local mean/deviation normalization (MSCN) on the 0-255 scale.
void mscn_transform(const Image& img255, Image& mscn, Image& sigma_map) {
  const Image mu = gaussian_blur(img255, 7.0 / 6.0);
  Image sq(img255.height(), img255.width());
  for (size_t i = 0; i < sq.size(); ++i) sq[i] = img255[i] * img255[i];
  const Image musq = gaussian_blur(sq, 7.0 / 6.0);
  mscn = Image(img255.height(), img255.width());
  sigma_map = Image(img255.height(), img255.width());
  for (size_t i = 0; i < mscn.size(); ++i) {
    const double var = std::max(0.0, musq[i] - mu[i] * mu[i]);
    const double sigma = std::sqrt(var);
    sigma_map[i] = sigma;
    mscn[i] = (img255[i] - mu[i]) / (sigma + 1.0);
  }
}

struct GammaTable {
  std::vector<double> gam, r_ggd, r_aggd;
  GammaTable() {
    for (double g = 0.2; g <= 10.0 + 1e-9; g += 0.001) {
      gam.push_back(g);
      const double g1 = std::tgamma(1.0 / g);
      const double g2 = std::tgamma(2.0 / g);
      const double g3 = std::tgamma(3.0 / g);
      r_ggd.push_back(g1 * g3 / (g2 * g2));
      r_aggd.push_back((g2 * g2) / (g1 * g3));
    }
  }
};

const GammaTable& gamma_table() {
  static const GammaTable table;
  return table;
}

// Generalized Gaussian fit by moment matching: returns (alpha, sigma^2).
std::pair<double, double> fit_ggd(const std::vector<double>& v) {
  const auto& t = gamma_table();
  double e_abs = 0.0, e_sq = 0.0;
  for (double x : v) {
    e_abs += std::abs(x);
    e_sq += x * x;
  }
  e_abs /= v.size();
  e_sq /= v.size();
  if (e_abs < 1e-12) return {t.gam.back(), 0.0};
  const double rho = e_sq / (e_abs * e_abs);
  size_t best = 0;
  double best_err = 1e300;
  for (size_t i = 0; i < t.gam.size(); ++i) {
    const double err = std::abs(rho - t.r_ggd[i]);
    if (err < best_err) {
      best_err = err;
      best = i;
    }
  }
  return {t.gam[best], e_sq};
}

// Asymmetric generalized Gaussian fit: returns (alpha, eta, sigma_l^2, sigma_r^2).
std::array<double, 4> fit_aggd(const std::vector<double>& v) {
  const auto& t = gamma_table();
  double sum_l = 0, sum_r = 0, e_abs = 0, e_sq = 0;
  size_t n_l = 0, n_r = 0;
  for (double x : v) {
    if (x < 0) {
      sum_l += x * x;
      ++n_l;
    } else if (x > 0) {
      sum_r += x * x;
      ++n_r;
    }
    e_abs += std::abs(x);
    e_sq += x * x;
  }
  const double left_sq = n_l ? sum_l / n_l : 0.0;
  const double right_sq = n_r ? sum_r / n_r : 0.0;
  const double left_std = std::sqrt(left_sq), right_std = std::sqrt(right_sq);
  e_abs /= v.size();
  e_sq /= v.size();
  if (e_sq < 1e-12 || right_std < 1e-12) return {t.gam.back(), 0.0, left_sq, right_sq};

  const double gammahat = left_std / right_std;
  const double rhat = (e_abs * e_abs) / e_sq;
  const double rhatnorm = rhat * (gammahat * gammahat * gammahat + 1.0) * (gammahat + 1.0) /
                          std::pow(gammahat * gammahat + 1.0, 2);
  size_t best = 0;
  double best_err = 1e300;
  for (size_t i = 0; i < t.gam.size(); ++i) {
    const double err = (t.r_aggd[i] - rhatnorm) * (t.r_aggd[i] - rhatnorm);
    if (err < best_err) {
      best_err = err;
      best = i;
    }
  }
  const double alpha = t.gam[best];
  const double eta = (right_std - left_std) * std::tgamma(2.0 / alpha) /
                     std::tgamma(1.0 / alpha);
  return {alpha, eta, left_sq, right_sq};
}

// 18 features of one MSCN patch: GGD pair + AGGD quadruples over the four
// pairwise-product orientations (H, V, D1, D2).
void patch_features18(const Image& mscn, int y0, int x0, int size, std::vector<double>& out) {
  std::vector<double> coeffs;
  coeffs.reserve(static_cast<size_t>(size) * size);
  for (int y = y0; y < y0 + size; ++y)
    for (int x = x0; x < x0 + size; ++x) coeffs.push_back(mscn.at(y, x));
  const auto [alpha, sigma_sq] = fit_ggd(coeffs);
  out.push_back(alpha);
  out.push_back(sigma_sq);

  const std::array<std::pair<int, int>, 4> shifts{{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};
  for (const auto& [dy, dx] : shifts) {
    std::vector<double> prod;
    prod.reserve(coeffs.size());
    for (int y = y0; y < y0 + size; ++y)
      for (int x = x0; x < x0 + size; ++x) {
        const int yy = y + dy, xx = x + dx;
        if (yy < y0 || yy >= y0 + size || xx < x0 || xx >= x0 + size) continue;
        prod.push_back(mscn.at(y, x) * mscn.at(yy, xx));
      }
    const auto aggd = fit_aggd(prod);
    out.insert(out.end(), aggd.begin(), aggd.end());
  }
}

struct ImageFeatures {
  std::vector<std::vector<double>> patches;  // each 36-dim
  std::vector<double> sharpness;             // per patch, scale-1 sigma mean
};

ImageFeatures compute_features(const Image& img01, int patch) {
  Image img255(img01.height(), img01.width());
  for (size_t i = 0; i < img255.size(); ++i) img255[i] = std::clamp(img01[i], 0.0, 1.0) * 255.0;

  Image mscn1, sig1, mscn2, sig2;
  mscn_transform(img255, mscn1, sig1);
  mscn_transform(box_downsample2(img255), mscn2, sig2);

  ImageFeatures feats;
  const int ny = img255.height() / patch, nx = img255.width() / patch;
  for (int py = 0; py < ny; ++py)
    for (int px = 0; px < nx; ++px) {
      std::vector<double> f;
      f.reserve(NiqeModel::kFeatureDim);
      patch_features18(mscn1, py * patch, px * patch, patch, f);
      patch_features18(mscn2, py * patch / 2, px * patch / 2, patch / 2, f);
      feats.patches.push_back(std::move(f));
      double sh = 0.0;
      for (int y = py * patch; y < (py + 1) * patch; ++y)
        for (int x = px * patch; x < (px + 1) * patch; ++x) sh += sig1.at(y, x);
      feats.sharpness.push_back(sh / (patch * patch));
    }
  return feats;
}

void mean_and_cov(const std::vector<std::vector<double>>& rows, Eigen::VectorXd& mu,
                  Eigen::MatrixXd& cov) {
  const int d = NiqeModel::kFeatureDim;
  const int n = static_cast<int>(rows.size());
  mu = Eigen::VectorXd::Zero(d);
  for (const auto& r : rows)
    for (int i = 0; i < d; ++i) mu(i) += r[i];
  mu /= std::max(1, n);
  cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& r : rows) {
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x(i) = r[i] - mu(i);
    cov += x * x.transpose();
  }
  cov /= std::max(1, n - 1);
}

}  // namespace

std::vector<double> niqe_patch_features(const Image& patch_scale1, const Image& patch_scale2) {
  std::vector<double> f;
  Image m1, s1, m2, s2;
  mscn_transform(patch_scale1, m1, s1);
  mscn_transform(patch_scale2, m2, s2);
  patch_features18(m1, 0, 0, patch_scale1.height(), f);
  patch_features18(m2, 0, 0, patch_scale2.height(), f);
  return f;
}

NiqeModel fit_niqe(const std::vector<Image>& pristine, const NiqeOptions& opts) {
  if (pristine.empty()) throw Error("fit_niqe: no pristine images");
  std::vector<std::vector<double>> selected;
  for (const Image& img : pristine) {
    if (img.height() < opts.patch_size || img.width() < opts.patch_size)
      throw Error("fit_niqe: image smaller than patch size");
    const ImageFeatures feats = compute_features(img, opts.patch_size);
    const double peak = *std::max_element(feats.sharpness.begin(), feats.sharpness.end());
    const double floor = opts.sharpness_fraction * peak;
    for (size_t i = 0; i < feats.patches.size(); ++i)
      if (feats.sharpness[i] >= floor) selected.push_back(feats.patches[i]);
  }
  if (selected.size() < 2) throw Error("fit_niqe: too few sharp patches");

  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
  mean_and_cov(selected, mu, cov);

  NiqeModel model;
  model.patch_size = opts.patch_size;
  model.sharpness_fraction = opts.sharpness_fraction;
  model.mean.assign(mu.data(), mu.data() + mu.size());
  model.covariance.resize(static_cast<size_t>(NiqeModel::kFeatureDim) * NiqeModel::kFeatureDim);
  for (int i = 0; i < NiqeModel::kFeatureDim; ++i)
    for (int j = 0; j < NiqeModel::kFeatureDim; ++j)
      model.covariance[static_cast<size_t>(i) * NiqeModel::kFeatureDim + j] = cov(i, j);
  return model;
}

double niqe(const Image& img, const NiqeModel& model) {
  const int d = NiqeModel::kFeatureDim;
  if (static_cast<int>(model.mean.size()) != d) throw Error("niqe: malformed model");
  const ImageFeatures feats = compute_features(img, model.patch_size);
  if (feats.patches.empty()) throw Error("niqe: image smaller than one patch");

  Eigen::VectorXd mu_img;
  Eigen::MatrixXd cov_img;
  mean_and_cov(feats.patches, mu_img, cov_img);

  Eigen::VectorXd mu_model(d);
  Eigen::MatrixXd cov_model(d, d);
  for (int i = 0; i < d; ++i) mu_model(i) = model.mean[i];
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      cov_model(i, j) = model.covariance[static_cast<size_t>(i) * d + j];

  Eigen::MatrixXd avg_cov = 0.5 * (cov_model + cov_img);
  // A relative ridge keeps the distance stable when the pristine fit is
  // near-singular (small corpora leave low-variance feature directions).
  const double ridge = 1e-3 * std::max(avg_cov.trace() / d, 1e-12);
  avg_cov.diagonal().array() += ridge;

  const Eigen::VectorXd diff = mu_model - mu_img;
  const Eigen::VectorXd solved = avg_cov.ldlt().solve(diff);
  return std::sqrt(std::max(0.0, diff.dot(solved)));
}

void save_niqe_model(const std::filesystem::path& path, const NiqeModel& model) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const char magic[] = "UTASIGN-NIQE-v1\n";
  out.write(magic, sizeof(magic) - 1);
  const std::int32_t patch = model.patch_size;
  out.write(reinterpret_cast<const char*>(&patch), sizeof(patch));
  out.write(reinterpret_cast<const char*>(&model.sharpness_fraction), sizeof(double));
  out.write(reinterpret_cast<const char*>(model.mean.data()),
            static_cast<std::streamsize>(model.mean.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(model.covariance.data()),
            static_cast<std::streamsize>(model.covariance.size() * sizeof(double)));
}

NiqeModel load_niqe_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[16];
  in.read(magic, 16);
  if (std::string(magic, 16) != "UTASIGN-NIQE-v1\n")
    throw IoError("bad NIQE model magic in " + path.string());
  NiqeModel model;
  std::int32_t patch = 0;
  in.read(reinterpret_cast<char*>(&patch), sizeof(patch));
  in.read(reinterpret_cast<char*>(&model.sharpness_fraction), sizeof(double));
  model.patch_size = patch;
  model.mean.resize(NiqeModel::kFeatureDim);
  model.covariance.resize(static_cast<size_t>(NiqeModel::kFeatureDim) * NiqeModel::kFeatureDim);
  in.read(reinterpret_cast<char*>(model.mean.data()),
          static_cast<std::streamsize>(model.mean.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(model.covariance.data()),
          static_cast<std::streamsize>(model.covariance.size() * sizeof(double)));
  if (!in) throw IoError("truncated NIQE model " + path.string());
  return model;
}

}  // namespace uta
