#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "uta/nn/ops.hpp"

namespace uta::nn {

using NamedParams = std::vector<std::pair<std::string, Var>>;

Tensor normal_init(const std::vector<int>& shape, double stddev, std::mt19937_64& rng);
/// He initialization for a conv weight (Co, Ci, kh, kw) feeding a leaky rectifier.
Tensor he_init(const std::vector<int>& shape, std::mt19937_64& rng);

struct Conv2dLayer {
  Var w, b;
  int stride = 1, pad = 0;
  Conv2dLayer() = default;
  Conv2dLayer(int cin, int cout, int k, int stride, int pad, std::mt19937_64& rng);
  Var forward(const Var& x) const { return conv2d(x, w, b, stride, pad); }
  void params(NamedParams& out, const std::string& prefix) const;
};

struct ConvTranspose2dLayer {
  Var w, b;
  int stride = 1, pad = 0, output_padding = 0;
  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(int cin, int cout, int k, int stride, int pad, int output_padding,
                       std::mt19937_64& rng);
  Var forward(const Var& x) const {
    return conv_transpose2d(x, w, b, stride, pad, output_padding);
  }
  void params(NamedParams& out, const std::string& prefix) const;
};

struct InstanceNorm2dLayer {
  Var gamma, beta;
  InstanceNorm2dLayer() = default;
  explicit InstanceNorm2dLayer(int channels);
  Var forward(const Var& x) const { return instance_norm2d(x, gamma, beta); }
  void params(NamedParams& out, const std::string& prefix) const;
};

struct LayerNormLayer {
  Var gamma, beta;
  LayerNormLayer() = default;
  explicit LayerNormLayer(int channels);
  Var forward(const Var& x) const { return layer_norm_lastdim(x, gamma, beta); }
  void params(NamedParams& out, const std::string& prefix) const;
};

struct LinearLayer {
  Var w, b;
  LinearLayer() = default;
  LinearLayer(int cin, int cout, std::mt19937_64& rng, double stddev = 0.02);
  Var forward(const Var& x) const { return linear_lastdim(x, w, b); }
  void params(NamedParams& out, const std::string& prefix) const;
};

/// Adam with a caller-supplied learning rate per step.
class Adam {
 public:
  Adam(std::vector<Var> params, double beta1 = 0.9, double beta2 = 0.95, double eps = 1e-8);
  void zero_grad();
  void step(double lr);

 private:
  struct Slot {
    Var p;
    Tensor m, v;
  };
  std::vector<Slot> slots_;
  double b1_, b2_, eps_;
  long t_ = 0;
};

/// A detached copy: same value, no tape history, never requires grad.
Var detach(const Var& x);

}  // namespace uta::nn
