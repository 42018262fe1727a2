#pragma once

#include <vector>

#include "uta/nn/tensor.hpp"

namespace uta::nn {

// Elementwise. add/sub/mul broadcast over axes of size 1 (equal ndim).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var leaky_relu(const Var& x, double alpha = 0.1);
Var sigmoid(const Var& x);
Var abs_op(const Var& x);

// Reductions.
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var mean_axis(const Var& x, int axis);  // squeezes the axis

// Shape bookkeeping.
Var reshape(const Var& x, std::vector<int> shape);
Var permute(const Var& x, const std::vector<int>& perm);
Var pad(const Var& x, const std::vector<std::pair<int, int>>& pads);     // zeros
Var slice(const Var& x, const std::vector<std::pair<int, int>>& start_len);
Var concat(const std::vector<Var>& xs, int axis);
Var roll(const Var& x, const std::vector<int>& shifts);  // cyclic, per axis

// Linear algebra.
Var linear_lastdim(const Var& x, const Var& w, const Var& b);  // w: (Cin, Cout)
Var bmm(const Var& a, const Var& b);  // (M,r,k) x (M,k,c) -> (M,r,c)
Var softmax_lastdim(const Var& x);
Var layer_norm_lastdim(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Spatial ops on NCHW tensors.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1, int pad = 0);
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride = 1, int pad = 0,
                     int output_padding = 0);
/// offsets: (B, 2*kh*kw, H, W), per tap (dy, dx); stride 1.
Var deform_conv2d(const Var& x, const Var& offsets, const Var& w, const Var& b, int pad = 0);
Var instance_norm2d(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var resize_bilinear2d(const Var& x, int out_h, int out_w);
Var reflect_pad2d(const Var& x, int p);

}  // namespace uta::nn
