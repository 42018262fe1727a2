#include "uta/nn/layers.hpp"

#include <cmath>

namespace uta::nn {

Tensor normal_init(const std::vector<int>& shape, double stddev, std::mt19937_64& rng) {
  Tensor t(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  for (size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

Tensor he_init(const std::vector<int>& shape, std::mt19937_64& rng) {
  size_t fan_in = 1;
  for (size_t i = 1; i < shape.size(); ++i) fan_in *= static_cast<size_t>(shape[i]);
  return normal_init(shape, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

Conv2dLayer::Conv2dLayer(int cin, int cout, int k, int stride_, int pad_, std::mt19937_64& rng)
    : w(he_init({cout, cin, k, k}, rng), true),
      b(Tensor({cout}), true),
      stride(stride_),
      pad(pad_) {}

void Conv2dLayer::params(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

ConvTranspose2dLayer::ConvTranspose2dLayer(int cin, int cout, int k, int stride_, int pad_,
                                           int output_padding_, std::mt19937_64& rng)
    : w(he_init({cin, cout, k, k}, rng), true),
      b(Tensor({cout}), true),
      stride(stride_),
      pad(pad_),
      output_padding(output_padding_) {}

void ConvTranspose2dLayer::params(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

InstanceNorm2dLayer::InstanceNorm2dLayer(int channels)
    : gamma(Tensor({channels}, 1.0), true), beta(Tensor({channels}), true) {}

void InstanceNorm2dLayer::params(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

LayerNormLayer::LayerNormLayer(int channels)
    : gamma(Tensor({channels}, 1.0), true), beta(Tensor({channels}), true) {}

void LayerNormLayer::params(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

LinearLayer::LinearLayer(int cin, int cout, std::mt19937_64& rng, double stddev)
    : w(normal_init({cin, cout}, stddev, rng), true), b(Tensor({cout}), true) {}

void LinearLayer::params(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

Adam::Adam(std::vector<Var> params, double beta1, double beta2, double eps)
    : b1_(beta1), b2_(beta2), eps_(eps) {
  for (Var& p : params) {
    Slot s;
    s.p = p;
    s.m = Tensor(p.value().shape());
    s.v = Tensor(p.value().shape());
    slots_.push_back(std::move(s));
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) s.p.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, t_);
  const double bc2 = 1.0 - std::pow(b2_, t_);
  for (Slot& s : slots_) {
    if (!s.p.has_grad()) continue;
    const Tensor& g = s.p.grad();
    Tensor& val = s.p.mutable_value();
    for (size_t i = 0; i < val.size(); ++i) {
      s.m[i] = b1_ * s.m[i] + (1.0 - b1_) * g[i];
      s.v[i] = b2_ * s.v[i] + (1.0 - b2_) * g[i] * g[i];
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

Var detach(const Var& x) { return Var(x.value(), false); }

}  // namespace uta::nn
