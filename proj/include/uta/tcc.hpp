#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "uta/image.hpp"
#include "uta/nn/layers.hpp"

namespace uta {

struct TccConfig {
  int n_frames = 7;  // N, frames per sketch volume
  int window_d = 2, window_h = 7, window_w = 7;
  std::array<int, 4> stage_depths{2, 2, 6, 2};
  int embed_dim = 48;
  std::array<int, 4> heads{3, 6, 12, 24};
  int patch_size = 8;    // spatial reduction between alignment and stage 1
  int align_kernel = 3;  // deformable convolution kernel
  int decode_dim = 16;
  int decode_heads = 4;
  int decode_window = 7;

  int stage_channels(int stage) const { return embed_dim << (stage - 1); }  // stage in [1,4]
};

namespace nn_detail {
struct WindowSpec {
  int d, h, w;
};

/// Multi-head self-attention inside cyclic windows of a (B,D,H,W,C) feature
/// volume. cum_roll is the accumulated roll applied to the layout so far;
/// window positions whose content wrapped across a roll boundary (or is
/// padding) are masked out of each other's softmax rows. If probs_out is
/// non-null the softmax tensor (nWin*heads, L, L) of the last call is stored.
nn::Var window_mhsa(const nn::Var& x, const nn::LinearLayer& qkv, const nn::LinearLayer& proj,
                    int heads, const WindowSpec& wnd, const std::array<int, 3>& cum_roll,
                    nn::Tensor* probs_out = nullptr);
}  // namespace nn_detail

/// Temporal Consistency Correction network: volume alignment via deformable
/// convolution, four shifted-window 3D attention stages and a 2D attention
/// decode of the target frame.
class TccNet {
 public:
  TccNet(const TccConfig& cfg, std::uint64_t seed);

  /// Offset prediction over the whole volume: (B,N,H,W) -> (B, N*2k*k, H, W).
  nn::Var predict_offsets(const nn::Var& volume) const;
  /// Deformable sampling at base grid + offsets: -> (B, N, embed, H, W).
  nn::Var deform_features(const nn::Var& volume, const nn::Var& offsets) const;
  nn::Var deform_align(const nn::Var& volume) const {
    return deform_features(volume, predict_offsets(volume));
  }

  /// One stage: cascade of attention blocks (last one unshifted), then 2x
  /// spatial downsample with channel doubling (stage 4 keeps its scale).
  /// Input and output are channels-last volumes (B, D, H, W, C).
  nn::Var swin_stage(const nn::Var& f, int stage) const;

  /// Temporal averaging + upsample to (out_h, out_w), 2D attention, 1-channel
  /// projection squashed to [0,1]. Input (B, D, h, w, C4) -> (B,1,out_h,out_w).
  nn::Var decode_target(const nn::Var& f_out, int out_h, int out_w) const;

  /// Full forward: (B, N, H, W) volume -> (B, 1, H, W) refined target frame.
  nn::Var forward(const nn::Var& volume) const;
  Image forward_image(const std::vector<Image>& volume) const;

  nn::NamedParams named_params() const;
  const TccConfig& config() const { return cfg_; }

  /// Attention-block invocation counts of the latest forward, per stage.
  const std::array<int, 4>& blocks_executed() const { return blocks_executed_; }

  struct AttnBlock {
    nn::LayerNormLayer norm;
    nn::LinearLayer qkv, proj;
  };
  /// Single attention block, exposed for contract tests. Applies the residual
  /// attention line and (unless final) the roll-and-add line.
  nn::Var attention_block(const nn::Var& x, const AttnBlock& blk, int heads, bool is_final,
                          std::array<int, 3>& cum_roll) const;

  const AttnBlock& block(int stage, int index) const {
    return stages_[stage - 1].blocks[index];
  }

 private:
  TccConfig cfg_;
  nn::Conv2dLayer offset_conv_;
  nn::Var deform_w_, deform_b_;
  nn::Conv2dLayer patch_embed_;

  struct Stage {
    std::vector<AttnBlock> blocks;
    nn::LinearLayer downsample;  // undefined weights for stage 4
    bool has_downsample = false;
  };
  std::array<Stage, 4> stages_;

  nn::LinearLayer decode_in_;
  AttnBlock decode_attn_;
  nn::LinearLayer decode_out_;

  mutable std::array<int, 4> blocks_executed_{0, 0, 0, 0};
  mutable int current_stage_ = 0;
};

}  // namespace uta
