#pragma once

#include <cstdint>
#include <vector>

#include "uta/image.hpp"
#include "uta/nn/layers.hpp"

namespace uta {

struct SisConfig {
  int levels = 4;         // K
  int base_channels = 32; // channel schedule: base * 2^k at level k
  int channels_at(int level) const { return base_channels << level; }
};

/// Signage Information Sketching network: two modality-specific strided
/// encoders, multiscale concatenation fusion and a transposed-convolution
/// decoder producing a [0,1] sketch at the input resolution.
class SisNet {
 public:
  enum class Branch { kEvent, kThermal };

  SisNet(const SisConfig& cfg, std::uint64_t seed);

  /// K+1 feature levels; level k has spatial size (H/2^k, W/2^k).
  std::vector<nn::Var> encode(const nn::Var& frame, Branch which) const;
  nn::Var fuse_decode(const std::vector<nn::Var>& pyr_ev,
                      const std::vector<nn::Var>& pyr_ir) const;
  /// encode x2 + fuse_decode. Inputs are (B, 1, H, W) with H, W divisible by 2^K.
  nn::Var forward(const nn::Var& i_ev, const nn::Var& i_ir) const;

  /// Convenience single-image path used by inference and tools.
  Image forward_image(const Image& i_ev, const Image& i_ir) const;

  nn::NamedParams named_params() const;
  const SisConfig& config() const { return cfg_; }

 private:
  struct EncLevel {
    nn::Conv2dLayer conv;
    nn::InstanceNorm2dLayer norm;
  };
  std::vector<nn::Var> run_encoder(const std::vector<EncLevel>& enc, const nn::Var& x) const;

  SisConfig cfg_;
  std::vector<EncLevel> enc_ev_, enc_ir_;
  nn::Conv2dLayer bottom_;
  std::vector<nn::ConvTranspose2dLayer> dec_;      // index 0 handles level K
  std::vector<nn::InstanceNorm2dLayer> dec_norm_;
  nn::Conv2dLayer out_proj_;
};

}  // namespace uta
