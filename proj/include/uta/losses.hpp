#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "uta/image.hpp"
#include "uta/nn/layers.hpp"

namespace uta {

/// Mean absolute difference; shared by the SIS and TCC data terms.
nn::Var l1_loss(const nn::Var& pred, const nn::Var& target);
inline nn::Var l_sis(const nn::Var& pred, const nn::Var& target) { return l1_loss(pred, target); }
inline nn::Var l_tcc(const nn::Var& pred, const nn::Var& target) { return l1_loss(pred, target); }

/// Laplacian response with reflect padding (3x3 kernel 0,1,0 / 1,-4,1 / 0,1,0).
nn::Var laplacian_response(const nn::Var& x);
/// Mean absolute difference of Laplacian responses.
nn::Var l_gradient(const nn::Var& pred, const nn::Var& target);

/// Frozen randomly initialized 3-depth convolutional pyramid. The weights are
/// derived from a pinned seed so every build ships the same extractor.
class PerceptualExtractor {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x5ee0'17a5;

  explicit PerceptualExtractor(std::uint64_t seed = kDefaultSeed);

  /// Mean absolute feature difference over mask-interior receptive fields,
  /// summed across the three depths. Empty interior contributes zero.
  nn::Var loss(const nn::Var& pred, const nn::Var& target, const Image& mask) const;

  /// Features of the three depths (valid convolutions, so each position's
  /// receptive field lies fully inside the input).
  std::vector<nn::Var> features(const nn::Var& x) const;
  /// Interior indicators matching each depth's receptive-field geometry.
  std::vector<Image> interior_masks(const Image& mask) const;

 private:
  nn::Var w1_, b1_, w2_, b2_, w3_, b3_;
};

struct LossWeights {
  double sis = 1.0, tcc = 1.0, perceptual = 1.0, gradient = 1.0;
};

/// Per-frame loss values and their exact sum (accumulated t-ascending,
/// component order sis, tcc, per, grad).
struct LossReport {
  struct Frame {
    double sis = 0, tcc = 0, perceptual = 0, gradient = 0;
  };
  std::vector<Frame> frames;
  double l_sis = 0, l_tcc = 0, l_per = 0, l_grad = 0, total = 0;

  void finalize();
};

}  // namespace uta
