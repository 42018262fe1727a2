#include "uta/losses.hpp"

#include <random>

namespace uta {

using nn::Tensor;
using nn::Var;

Var l1_loss(const Var& pred, const Var& target) {
  if (pred.shape() != target.shape()) throw ShapeError("l1_loss: shape mismatch");
  return nn::mean_all(nn::abs_op(nn::sub(pred, target)));
}

Var laplacian_response(const Var& x) {
  static const double k[9] = {0, 1, 0, 1, -4, 1, 0, 1, 0};
  Tensor w({1, 1, 3, 3});
  std::copy(k, k + 9, w.data());
  const Var kernel{std::move(w)};
  Var padded = nn::reflect_pad2d(x, 1);
  return nn::conv2d(padded, kernel, Var(), 1, 0);
}

Var l_gradient(const Var& pred, const Var& target) {
  if (pred.shape() != target.shape()) throw ShapeError("l_gradient: shape mismatch");
  return nn::mean_all(nn::abs_op(nn::sub(laplacian_response(pred), laplacian_response(target))));
}

PerceptualExtractor::PerceptualExtractor(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  w1_ = Var(nn::he_init({8, 1, 3, 3}, rng));
  b1_ = Var(Tensor({8}));
  w2_ = Var(nn::he_init({16, 8, 3, 3}, rng));
  b2_ = Var(Tensor({16}));
  w3_ = Var(nn::he_init({32, 16, 3, 3}, rng));
  b3_ = Var(Tensor({32}));
}

std::vector<Var> PerceptualExtractor::features(const Var& x) const {
  std::vector<Var> out;
  Var f1 = nn::leaky_relu(nn::conv2d(x, w1_, b1_, 1, 0));
  out.push_back(f1);
  Var f2 = nn::leaky_relu(nn::conv2d(f1, w2_, b2_, 2, 0));
  out.push_back(f2);
  out.push_back(nn::leaky_relu(nn::conv2d(f2, w3_, b3_, 2, 0)));
  return out;
}

namespace {

// Min-pool mirroring a valid 3x3 convolution of the given stride: the result
// is 1 exactly where the conv's receptive field lies fully inside the mask.
Image min_pool3(const Image& m, int stride) {
  const int ho = (m.height() - 3) / stride + 1;
  const int wo = (m.width() - 3) / stride + 1;
  Image out(std::max(0, ho), std::max(0, wo));
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x) {
      double v = 1.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) v = std::min(v, m.at(y * stride + i, x * stride + j));
      out.at(y, x) = v;
    }
  return out;
}

}  // namespace

std::vector<Image> PerceptualExtractor::interior_masks(const Image& mask) const {
  std::vector<Image> out;
  out.push_back(min_pool3(mask, 1));
  out.push_back(min_pool3(out[0], 2));
  out.push_back(min_pool3(out[1], 2));
  return out;
}

Var PerceptualExtractor::loss(const Var& pred, const Var& target, const Image& mask) const {
  if (pred.shape() != target.shape()) throw ShapeError("perceptual loss: shape mismatch");
  const auto& s = pred.shape();
  if (s.size() != 4 || s[1] != 1) throw ShapeError("perceptual loss: need (B,1,H,W)");
  if (mask.height() != s[2] || mask.width() != s[3])
    throw ShapeError("perceptual loss: mask resolution mismatch");
  if (s[2] < 3 || s[3] < 3) return Var(Tensor::scalar(0.0));

  const auto f_pred = features(pred);
  const auto f_tgt = features(target);
  const auto interiors = interior_masks(mask);

  Var total(Tensor::scalar(0.0));
  for (size_t d = 0; d < f_pred.size(); ++d) {
    const Image& m = interiors[d];
    double count = 0;
    for (size_t i = 0; i < m.size(); ++i) count += m[i];
    if (count == 0.0 || m.empty()) continue;

    const auto& fs = f_pred[d].shape();
    Tensor mt({1, 1, fs[2], fs[3]});
    std::copy(m.data(), m.data() + m.size(), mt.data());
    const Var diff = nn::abs_op(nn::sub(f_pred[d], f_tgt[d]));
    const Var masked = nn::mul(diff, Var(std::move(mt)));
    const double denom = count * fs[0] * fs[1];
    total = nn::add(total, nn::scale(nn::sum_all(masked), 1.0 / denom));
  }
  return total;
}

void LossReport::finalize() {
  l_sis = l_tcc = l_per = l_grad = total = 0.0;
  for (const Frame& f : frames) {
    l_sis += f.sis;
    l_tcc += f.tcc;
    l_per += f.perceptual;
    l_grad += f.gradient;
    total += f.sis + f.tcc + f.perceptual + f.gradient;
  }
}

}  // namespace uta
