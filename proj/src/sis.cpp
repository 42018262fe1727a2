#include "uta/sis.hpp"

#include <string>

namespace uta {

using nn::Var;

SisNet::SisNet(const SisConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.levels < 1) throw Error("SisConfig: levels must be >= 1");
  std::mt19937_64 rng(seed);

  auto build_encoder = [&](std::vector<EncLevel>& enc) {
    enc.clear();
    for (int k = 0; k <= cfg_.levels; ++k) {
      const int cin = k == 0 ? 1 : cfg_.channels_at(k - 1);
      const int cout = cfg_.channels_at(k);
      const int stride = k == 0 ? 1 : 2;
      EncLevel lvl;
      lvl.conv = nn::Conv2dLayer(cin, cout, 3, stride, 1, rng);
      lvl.norm = nn::InstanceNorm2dLayer(cout);
      enc.push_back(std::move(lvl));
    }
  };
  build_encoder(enc_ev_);
  build_encoder(enc_ir_);

  const int cK = cfg_.channels_at(cfg_.levels);
  bottom_ = nn::Conv2dLayer(2 * cK, cK, 3, 1, 1, rng);

  // Decoder step for level k consumes cat(F_IR^k, F_EV^k, O_k) and emits
  // O_{k-1} at twice the resolution.
  for (int k = cfg_.levels; k >= 1; --k) {
    const int ck = cfg_.channels_at(k);
    const int ok = cfg_.channels_at(k);           // O_k width
    const int out = cfg_.channels_at(k - 1);      // O_{k-1} width
    dec_.emplace_back(2 * ck + ok, out, 4, 2, 1, 0, rng);
    dec_norm_.emplace_back(out);
  }
  out_proj_ = nn::Conv2dLayer(cfg_.base_channels, 1, 1, 1, 0, rng);
}

std::vector<Var> SisNet::run_encoder(const std::vector<EncLevel>& enc, const Var& x) const {
  std::vector<Var> pyramid;
  Var cur = x;
  for (const EncLevel& lvl : enc) {
    cur = nn::leaky_relu(lvl.norm.forward(lvl.conv.forward(cur)));
    pyramid.push_back(cur);
  }
  return pyramid;
}

std::vector<Var> SisNet::encode(const Var& frame, Branch which) const {
  const auto& shape = frame.shape();
  if (shape.size() != 4 || shape[1] != 1) throw ShapeError("SisNet::encode: need (B,1,H,W)");
  const int div = 1 << cfg_.levels;
  if (shape[2] % div != 0 || shape[3] % div != 0)
    throw ShapeError("SisNet::encode: spatial dims must be divisible by 2^K");
  return run_encoder(which == Branch::kEvent ? enc_ev_ : enc_ir_, frame);
}

Var SisNet::fuse_decode(const std::vector<Var>& pyr_ev, const std::vector<Var>& pyr_ir) const {
  if (pyr_ev.size() != pyr_ir.size() || static_cast<int>(pyr_ev.size()) != cfg_.levels + 1)
    throw ShapeError("SisNet::fuse_decode: pyramid level count mismatch");
  for (size_t k = 0; k < pyr_ev.size(); ++k)
    if (pyr_ev[k].shape() != pyr_ir[k].shape())
      throw ShapeError("SisNet::fuse_decode: pyramid shapes differ at level " + std::to_string(k));

  const int K = cfg_.levels;
  Var o = nn::leaky_relu(bottom_.forward(nn::concat({pyr_ir[K], pyr_ev[K]}, 1)));
  for (int k = K; k >= 1; --k) {
    Var fused = nn::concat({pyr_ir[k], pyr_ev[k]}, 1);
    // UP(.) resizes the fused features to O_k's grid before concatenation.
    fused = nn::resize_bilinear2d(fused, o.shape()[2], o.shape()[3]);
    const size_t step = static_cast<size_t>(K - k);
    o = nn::leaky_relu(dec_norm_[step].forward(dec_[step].forward(nn::concat({fused, o}, 1))));
  }
  return nn::sigmoid(out_proj_.forward(o));
}

Var SisNet::forward(const Var& i_ev, const Var& i_ir) const {
  if (i_ev.shape() != i_ir.shape()) throw ShapeError("SisNet::forward: input shape mismatch");
  return fuse_decode(encode(i_ev, Branch::kEvent), encode(i_ir, Branch::kThermal));
}

Image SisNet::forward_image(const Image& i_ev, const Image& i_ir) const {
  nn::NoGradGuard guard;
  const Var out = forward(Var(nn::Tensor::from_image(i_ev)), Var(nn::Tensor::from_image(i_ir)));
  return out.value().to_image();
}

nn::NamedParams SisNet::named_params() const {
  nn::NamedParams out;
  for (size_t k = 0; k < enc_ev_.size(); ++k) {
    enc_ev_[k].conv.params(out, "sis.enc_ev." + std::to_string(k) + ".conv");
    enc_ev_[k].norm.params(out, "sis.enc_ev." + std::to_string(k) + ".norm");
  }
  for (size_t k = 0; k < enc_ir_.size(); ++k) {
    enc_ir_[k].conv.params(out, "sis.enc_ir." + std::to_string(k) + ".conv");
    enc_ir_[k].norm.params(out, "sis.enc_ir." + std::to_string(k) + ".norm");
  }
  bottom_.params(out, "sis.bottom");
  for (size_t i = 0; i < dec_.size(); ++i) {
    dec_[i].params(out, "sis.dec." + std::to_string(i));
    dec_norm_[i].params(out, "sis.dec." + std::to_string(i) + ".norm");
  }
  out_proj_.params(out, "sis.out_proj");
  return out;
}

}  // namespace uta
