#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <random>

#include "test_util.hpp"
#include "uta/metrics.hpp"

using namespace uta;
using testutil::paint_canvas;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("entropy closed forms") {
  SUBCASE("constant image has zero entropy") {
    CHECK(entropy(Image(32, 32, 0.7)) == 0.0);
  }
  SUBCASE("two equally frequent levels give exactly one bit") {
    Image img(2, 32);
    for (int x = 0; x < 32; ++x) {
      img.at(0, x) = 0.1;
      img.at(1, x) = 0.9;
    }
    CHECK(entropy(img) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("uniform occupancy of all 256 bins gives 8 bits") {
    Image img(16, 16);
    for (int i = 0; i < 256; ++i) img[i] = (i + 0.5) / 256.0;
    CHECK(entropy(img) == doctest::Approx(8.0).epsilon(1e-9));
  }
  SUBCASE("entropy is permutation invariant and bounded by 8") {
    std::mt19937_64 rng(1);
    Image img(16, 16);
    std::uniform_real_distribution<double> v(0, 1);
    for (size_t i = 0; i < img.size(); ++i) img[i] = v(rng);
    const double h = entropy(img);
    CHECK(h <= 8.0);
    Image shuffled = img;
    std::shuffle(shuffled.data(), shuffled.data() + shuffled.size(), rng);
    CHECK(entropy(shuffled) == doctest::Approx(h).epsilon(1e-12));
  }
}

TEST_CASE("std_dev closed forms") {
  SUBCASE("constant image has zero dispersion") {
    CHECK(std_dev(Image(8, 8, 0.5)) == 0.0);
  }
  SUBCASE("half black, half white gives 127.5") {
    Image img(2, 16);
    for (int x = 0; x < 16; ++x) img.at(1, x) = 1.0;
    CHECK(std_dev(img) == doctest::Approx(127.5).epsilon(1e-9));
  }
  SUBCASE("iid uniform noise approaches 255/sqrt(12)") {
    std::mt19937_64 rng(2);
    Image img(1000, 1000);
    std::uniform_real_distribution<double> v(0, 1);
    for (size_t i = 0; i < img.size(); ++i) img[i] = v(rng);
    CHECK(std_dev(img) == doctest::Approx(255.0 / std::sqrt(12.0)).epsilon(0.01));
    CHECK(std::abs(std_dev(img) - 73.6) < 1.0);
  }
}

namespace {

std::vector<Image> pristine_corpus() {
  std::vector<Image> imgs;
  for (int i = 0; i < 9; ++i) {
    Image img = paint_canvas(96, 96, 1000 + i, 60 + 40 * (i % 3));
    if (i % 3 == 1) img = gaussian_blur(img, 0.6);
    imgs.push_back(std::move(img));
  }
  return imgs;
}

Image with_noise(const Image& img, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  Image out = img;
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i] + n(rng), 0.0, 1.0);
  return out;
}

}  // namespace

TEST_CASE("niqe model fitting") {
  const auto corpus = pristine_corpus();

  SUBCASE("fitting is deterministic") {
    const NiqeModel a = fit_niqe(corpus);
    const NiqeModel b = fit_niqe(corpus);
    CHECK(a.mean == b.mean);
    CHECK(a.covariance == b.covariance);
  }
  SUBCASE("feature dimensionality is 36 and covariance is symmetric PSD") {
    const NiqeModel m = fit_niqe(corpus);
    REQUIRE(m.mean.size() == 36);
    REQUIRE(m.covariance.size() == 36 * 36);
    Eigen::MatrixXd cov(36, 36);
    for (int i = 0; i < 36; ++i)
      for (int j = 0; j < 36; ++j) cov(i, j) = m.covariance[static_cast<size_t>(i) * 36 + j];
    CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
  SUBCASE("model file round-trips") {
    const NiqeModel m = fit_niqe(corpus);
    const auto path = std::filesystem::temp_directory_path() / "uta_test_niqe.bin";
    save_niqe_model(path, m);
    const NiqeModel back = load_niqe_model(path);
    CHECK(back.mean == m.mean);
    CHECK(back.covariance == m.covariance);
    CHECK(back.patch_size == m.patch_size);
    std::filesystem::remove(path);
  }
}

TEST_CASE("niqe scoring behavior") {
  const NiqeModel model = fit_niqe(pristine_corpus());
  const Image probe = paint_canvas(96, 96, 2000);

  SUBCASE("scores are finite and non-negative") {
    const double s = niqe(probe, model);
    CHECK(std::isfinite(s));
    CHECK(s >= 0.0);
  }
  SUBCASE("heavy noise scores worse than the clean image") {
    const double clean = niqe(probe, model);
    const double noisy = niqe(with_noise(probe, 50.0 / 255.0, 7), model);
    CHECK(noisy > clean);
  }
  SUBCASE("score is non-decreasing over a 3-level noise sweep") {
    double prev = niqe(probe, model);
    for (double sigma : {10.0 / 255.0, 25.0 / 255.0, 50.0 / 255.0}) {
      const double s = niqe(with_noise(probe, sigma, 11), model);
      CHECK(s >= prev - 1e-9);
      prev = s;
    }
  }
  SUBCASE("score is non-decreasing over a 3-level blur sweep") {
    double prev = niqe(probe, model);
    for (double sigma : {1.0, 2.0, 4.0}) {
      const double s = niqe(gaussian_blur(probe, sigma), model);
      CHECK(s >= prev - 1e-9);
      prev = s;
    }
  }
}

TEST_SUITE_END();
