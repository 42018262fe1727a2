#include "uta/tcc.hpp"

#include <cmath>
#include <string>

namespace uta {

using nn::Tensor;
using nn::Var;
using nn_detail::WindowSpec;

namespace {

int ceil_to(int v, int m) { return (v + m - 1) / m * m; }

// Region label per padded axis position: 0 for contiguous content, 1 for
// content that wrapped around the roll boundary, 2 for padding.
int axis_label(int i, int true_len, int roll) {
  if (i >= true_len) return 2;
  const int r = ((roll % true_len) + true_len) % true_len;
  return i < r ? 1 : 0;
}

// Additive attention mask, (nWin, 1, L, L): 0 where a pair may attend,
// -1e9 where the window mixes wrapped or padded content.
Tensor build_window_mask(int dp, int hp, int wp, int d, int h, int w, const WindowSpec& wnd,
                         const std::array<int, 3>& cum_roll) {
  const int nd = dp / wnd.d, nh = hp / wnd.h, nw = wp / wnd.w;
  const int n_win = nd * nh * nw;
  const int L = wnd.d * wnd.h * wnd.w;

  std::vector<int> labels(static_cast<size_t>(n_win) * L);
  for (int wd = 0; wd < nd; ++wd)
    for (int wh = 0; wh < nh; ++wh)
      for (int ww = 0; ww < nw; ++ww) {
        const int win = (wd * nh + wh) * nw + ww;
        int pos = 0;
        for (int id = 0; id < wnd.d; ++id)
          for (int ih = 0; ih < wnd.h; ++ih)
            for (int iw = 0; iw < wnd.w; ++iw, ++pos) {
              const int gd = wd * wnd.d + id;
              const int gh = wh * wnd.h + ih;
              const int gw = ww * wnd.w + iw;
              labels[static_cast<size_t>(win) * L + pos] =
                  axis_label(gd, d, cum_roll[0]) * 9 + axis_label(gh, h, cum_roll[1]) * 3 +
                  axis_label(gw, w, cum_roll[2]);
            }
      }

  Tensor mask({n_win, 1, L, L});
  for (int win = 0; win < n_win; ++win)
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j)
        mask[((static_cast<size_t>(win) * L) + i) * L + j] =
            labels[static_cast<size_t>(win) * L + i] == labels[static_cast<size_t>(win) * L + j]
                ? 0.0
                : -1e9;
  return mask;
}

}  // namespace

namespace nn_detail {

Var window_mhsa(const Var& x, const nn::LinearLayer& qkv, const nn::LinearLayer& proj, int heads,
                const WindowSpec& wnd, const std::array<int, 3>& cum_roll, Tensor* probs_out) {
  const auto& s = x.shape();
  if (s.size() != 5) throw ShapeError("window_mhsa: need (B,D,H,W,C)");
  const int B = s[0], D = s[1], H = s[2], W = s[3], C = s[4];
  if (C % heads != 0) throw ShapeError("window_mhsa: channels not divisible by heads");
  const int dh = C / heads;

  const int dp = ceil_to(std::max(D, wnd.d), wnd.d);
  const int hp = ceil_to(std::max(H, wnd.h), wnd.h);
  const int wp = ceil_to(std::max(W, wnd.w), wnd.w);
  Var h = nn::pad(x, {{0, 0}, {0, dp - D}, {0, hp - H}, {0, wp - W}, {0, 0}});

  const int nd = dp / wnd.d, nh = hp / wnd.h, nw = wp / wnd.w;
  const int n_win = nd * nh * nw;
  const int L = wnd.d * wnd.h * wnd.w;

  // Partition into windows: (B*nWin, L, C).
  h = nn::reshape(h, {B, nd, wnd.d, nh, wnd.h, nw, wnd.w, C});
  h = nn::permute(h, {0, 1, 3, 5, 2, 4, 6, 7});
  h = nn::reshape(h, {B * n_win, L, C});

  Var qkv_out = qkv.forward(h);  // (BW, L, 3C)
  qkv_out = nn::reshape(qkv_out, {B * n_win, L, 3, heads, dh});
  qkv_out = nn::permute(qkv_out, {2, 0, 3, 1, 4});  // (3, BW, heads, L, dh)
  auto take = [&](int which) {
    Var t = nn::slice(qkv_out, {{which, 1}, {0, B * n_win}, {0, heads}, {0, L}, {0, dh}});
    return nn::reshape(t, {B * n_win * heads, L, dh});
  };
  const Var q = take(0), k = take(1), v = take(2);

  Var scores = nn::bmm(q, nn::permute(k, {0, 2, 1}));
  scores = nn::scale(scores, 1.0 / std::sqrt(static_cast<double>(dh)));
  scores = nn::reshape(scores, {B * n_win, heads, L, L});

  Tensor mask = build_window_mask(dp, hp, wp, D, H, W, wnd, cum_roll);
  // Tile the per-window mask across the batch.
  Tensor mask_b({B * n_win, 1, L, L});
  for (int b = 0; b < B; ++b)
    std::copy(mask.data(), mask.data() + mask.size(),
              mask_b.data() + static_cast<size_t>(b) * mask.size());
  scores = nn::add(scores, Var(std::move(mask_b)));

  Var attn = nn::softmax_lastdim(nn::reshape(scores, {B * n_win * heads, L, L}));
  if (probs_out) *probs_out = attn.value();

  Var out = nn::bmm(attn, v);  // (BWh, L, dh)
  out = nn::reshape(out, {B * n_win, heads, L, dh});
  out = nn::permute(out, {0, 2, 1, 3});
  out = nn::reshape(out, {B * n_win, L, C});
  out = proj.forward(out);

  // Merge windows and crop the padding away.
  out = nn::reshape(out, {B, nd, nh, nw, wnd.d, wnd.h, wnd.w, C});
  out = nn::permute(out, {0, 1, 4, 2, 5, 3, 6, 7});
  out = nn::reshape(out, {B, dp, hp, wp, C});
  return nn::slice(out, {{0, B}, {0, D}, {0, H}, {0, W}, {0, C}});
}

}  // namespace nn_detail

TccNet::TccNet(const TccConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.n_frames < 1) throw Error("TccConfig: n_frames must be >= 1");
  for (int l = 1; l <= 4; ++l)
    if (cfg_.stage_channels(l) % cfg_.heads[l - 1] != 0)
      throw Error("TccConfig: stage channels must divide heads");
  std::mt19937_64 rng(seed);

  const int k = cfg_.align_kernel;
  offset_conv_ = nn::Conv2dLayer(cfg_.n_frames, cfg_.n_frames * 2 * k * k, 3, 1, 1, rng);
  // Zero-init offsets: alignment starts from the identity sampling grid.
  offset_conv_.w = Var(Tensor(offset_conv_.w.shape()), true);
  deform_w_ = Var(nn::he_init({cfg_.embed_dim, 1, k, k}, rng), true);
  deform_b_ = Var(Tensor({cfg_.embed_dim}), true);
  patch_embed_ =
      nn::Conv2dLayer(cfg_.embed_dim, cfg_.embed_dim, cfg_.patch_size, cfg_.patch_size, 0, rng);

  for (int l = 1; l <= 4; ++l) {
    Stage& st = stages_[l - 1];
    const int c = cfg_.stage_channels(l);
    for (int b = 0; b < cfg_.stage_depths[l - 1]; ++b) {
      AttnBlock blk;
      blk.norm = nn::LayerNormLayer(c);
      blk.qkv = nn::LinearLayer(c, 3 * c, rng);
      blk.proj = nn::LinearLayer(c, c, rng);
      st.blocks.push_back(std::move(blk));
    }
    if (l < 4) {
      st.downsample = nn::LinearLayer(4 * c, 2 * c, rng);
      st.has_downsample = true;
    }
  }

  const int c4 = cfg_.stage_channels(4);
  decode_in_ = nn::LinearLayer(c4, cfg_.decode_dim, rng);
  decode_attn_.norm = nn::LayerNormLayer(cfg_.decode_dim);
  decode_attn_.qkv = nn::LinearLayer(cfg_.decode_dim, 3 * cfg_.decode_dim, rng);
  decode_attn_.proj = nn::LinearLayer(cfg_.decode_dim, cfg_.decode_dim, rng);
  decode_out_ = nn::LinearLayer(cfg_.decode_dim, 1, rng);
}

Var TccNet::predict_offsets(const Var& volume) const {
  const auto& s = volume.shape();
  if (s.size() != 4 || s[1] != cfg_.n_frames)
    throw ShapeError("TccNet::predict_offsets: need (B, N, H, W) with N = config n_frames");
  return offset_conv_.forward(volume);
}

Var TccNet::deform_features(const Var& volume, const Var& offsets) const {
  const auto& s = volume.shape();
  const int B = s[0], N = s[1], H = s[2], W = s[3];
  const int k = cfg_.align_kernel;
  if (offsets.shape() != std::vector<int>{B, N * 2 * k * k, H, W})
    throw ShapeError("TccNet::deform_features: offset shape mismatch");

  std::vector<Var> per_frame;
  per_frame.reserve(N);
  for (int n = 0; n < N; ++n) {
    Var frame = nn::slice(volume, {{0, B}, {n, 1}, {0, H}, {0, W}});
    Var off = nn::slice(offsets, {{0, B}, {n * 2 * k * k, 2 * k * k}, {0, H}, {0, W}});
    Var f = nn::deform_conv2d(frame, off, deform_w_, deform_b_, k / 2);
    per_frame.push_back(nn::reshape(f, {B, 1, cfg_.embed_dim, H, W}));
  }
  return nn::concat(per_frame, 1);
}

Var TccNet::attention_block(const Var& x, const AttnBlock& blk, int heads, bool is_final,
                            std::array<int, 3>& cum_roll) const {
  const WindowSpec wnd{cfg_.window_d, cfg_.window_h, cfg_.window_w};
  const Var attn = nn_detail::window_mhsa(blk.norm.forward(x), blk.qkv, blk.proj, heads, wnd,
                                          cum_roll);
  Var x1 = nn::add(x, attn);
  if (is_final) return x1;  // the final block does not employ window shifting

  const std::array<int, 3> s{wnd.d / 2, wnd.h / 2, wnd.w / 2};
  const Var rolled = nn::roll(x1, {0, s[0], s[1], s[2], 0});
  for (int i = 0; i < 3; ++i) cum_roll[i] += s[i];
  return nn::add(rolled, x1);
}

Var TccNet::swin_stage(const Var& f, int stage) const {
  if (stage < 1 || stage > 4) throw Error("TccNet::swin_stage: stage must be in [1,4]");
  const auto& s = f.shape();
  if (s.size() != 5 || s[4] != cfg_.stage_channels(stage))
    throw ShapeError("TccNet::swin_stage: bad input shape " + f.value().shape_str() +
                     " for stage " + std::to_string(stage));
  const Stage& st = stages_[stage - 1];

  Var x = f;
  std::array<int, 3> cum_roll{0, 0, 0};
  for (size_t b = 0; b < st.blocks.size(); ++b) {
    const bool is_final = b + 1 == st.blocks.size();
    x = attention_block(x, st.blocks[b], cfg_.heads[stage - 1], is_final, cum_roll);
    ++blocks_executed_[stage - 1];
  }
  if (!st.has_downsample) return x;

  // Patch-merge downsample: 2x2 spatial neighborhoods -> channel doubling.
  const int B = s[0], D = s[1], H = s[2], W = s[3], C = s[4];
  const int hp = ceil_to(H, 2), wp = ceil_to(W, 2);
  if (hp != H || wp != W) x = nn::pad(x, {{0, 0}, {0, 0}, {0, hp - H}, {0, wp - W}, {0, 0}});
  x = nn::reshape(x, {B, D, hp / 2, 2, wp / 2, 2, C});
  x = nn::permute(x, {0, 1, 2, 4, 3, 5, 6});
  x = nn::reshape(x, {B, D, hp / 2, wp / 2, 4 * C});
  return st.downsample.forward(x);
}

Var TccNet::decode_target(const Var& f_out, int out_h, int out_w) const {
  const auto& s = f_out.shape();
  if (s.size() != 5 || s[4] != cfg_.stage_channels(4))
    throw ShapeError("TccNet::decode_target: expected stage-4 features");
  const int B = s[0];

  Var x = nn::mean_axis(f_out, 1);                   // (B, h, w, C4)
  x = decode_in_.forward(x);                         // (B, h, w, dec)
  x = nn::permute(x, {0, 3, 1, 2});                  // (B, dec, h, w)
  x = nn::resize_bilinear2d(x, out_h, out_w);        // Avg: back to the input size
  x = nn::permute(x, {0, 2, 3, 1});                  // (B, H, W, dec)
  x = nn::reshape(x, {B, 1, out_h, out_w, cfg_.decode_dim});

  const WindowSpec wnd{1, cfg_.decode_window, cfg_.decode_window};
  const std::array<int, 3> no_roll{0, 0, 0};
  const Var attn = nn_detail::window_mhsa(decode_attn_.norm.forward(x), decode_attn_.qkv,
                                          decode_attn_.proj, cfg_.decode_heads, wnd, no_roll);
  x = nn::add(x, attn);
  x = nn::sigmoid(decode_out_.forward(x));           // (B, 1, H, W, 1)
  return nn::reshape(x, {B, 1, out_h, out_w});
}

Var TccNet::forward(const Var& volume) const {
  const auto& s = volume.shape();
  if (s.size() != 4) throw ShapeError("TccNet::forward: need (B, N, H, W)");
  const int B = s[0], N = s[1], H = s[2], W = s[3];
  if (N != cfg_.n_frames) throw ShapeError("TccNet::forward: volume length != config n_frames");
  blocks_executed_ = {0, 0, 0, 0};

  Var f = deform_align(volume);  // (B, N, embed, H, W)
  f = nn::reshape(f, {B * N, cfg_.embed_dim, H, W});
  f = patch_embed_.forward(f);
  const int h = f.shape()[2], w = f.shape()[3];
  f = nn::reshape(f, {B, N, cfg_.embed_dim, h, w});
  f = nn::permute(f, {0, 1, 3, 4, 2});  // (B, N, h, w, embed)

  for (int l = 1; l <= 4; ++l) f = swin_stage(f, l);
  return decode_target(f, H, W);
}

Image TccNet::forward_image(const std::vector<Image>& volume) const {
  nn::NoGradGuard guard;
  if (static_cast<int>(volume.size()) != cfg_.n_frames)
    throw ShapeError("TccNet::forward_image: volume length mismatch");
  const int H = volume[0].height(), W = volume[0].width();
  Tensor v({1, cfg_.n_frames, H, W});
  for (int n = 0; n < cfg_.n_frames; ++n) {
    if (!volume[n].same_shape(volume[0]))
      throw ShapeError("TccNet::forward_image: frame shape mismatch");
    std::copy(volume[n].data(), volume[n].data() + volume[n].size(),
              v.data() + static_cast<size_t>(n) * H * W);
  }
  return forward(Var(std::move(v))).value().to_image();
}

nn::NamedParams TccNet::named_params() const {
  nn::NamedParams out;
  offset_conv_.params(out, "tcc.offset_conv");
  out.emplace_back("tcc.deform.w", deform_w_);
  out.emplace_back("tcc.deform.b", deform_b_);
  patch_embed_.params(out, "tcc.patch_embed");
  for (int l = 1; l <= 4; ++l) {
    const Stage& st = stages_[l - 1];
    for (size_t b = 0; b < st.blocks.size(); ++b) {
      const std::string p = "tcc.stage" + std::to_string(l) + ".block" + std::to_string(b);
      st.blocks[b].norm.params(out, p + ".norm");
      st.blocks[b].qkv.params(out, p + ".qkv");
      st.blocks[b].proj.params(out, p + ".proj");
    }
    if (st.has_downsample)
      st.downsample.params(out, "tcc.stage" + std::to_string(l) + ".downsample");
  }
  decode_in_.params(out, "tcc.decode.in");
  decode_attn_.norm.params(out, "tcc.decode.attn.norm");
  decode_attn_.qkv.params(out, "tcc.decode.attn.qkv");
  decode_attn_.proj.params(out, "tcc.decode.attn.proj");
  decode_out_.params(out, "tcc.decode.out");
  return out;
}

}  // namespace uta
