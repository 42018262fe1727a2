#include "uta/nn/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace uta::nn {

namespace {

using RMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RMatrix>;
using MapCM = Eigen::Map<const RMatrix>;

void check(bool cond, const char* msg) {
  if (!cond) throw ShapeError(msg);
}

// Iterates an output shape while tracking a broadcast input's flat index.
struct BroadcastIter {
  std::vector<int> out_shape;
  std::vector<size_t> in_strides;  // 0 on broadcast axes

  BroadcastIter(const std::vector<int>& out, const Tensor& in) : out_shape(out) {
    check(static_cast<int>(out.size()) == in.ndim(), "broadcast: rank mismatch");
    const auto st = in.strides();
    in_strides.resize(out.size());
    for (size_t i = 0; i < out.size(); ++i) {
      if (in.dim(static_cast<int>(i)) == out[i])
        in_strides[i] = st[i];
      else if (in.dim(static_cast<int>(i)) == 1)
        in_strides[i] = 0;
      else
        throw ShapeError("broadcast: incompatible dims");
    }
  }
};

std::vector<int> broadcast_shape(const Tensor& a, const Tensor& b) {
  check(a.ndim() == b.ndim(), "broadcast: equal rank required");
  std::vector<int> out(a.shape());
  for (int i = 0; i < a.ndim(); ++i) {
    if (a.dim(i) == b.dim(i))
      out[i] = a.dim(i);
    else if (a.dim(i) == 1)
      out[i] = b.dim(i);
    else if (b.dim(i) == 1)
      out[i] = a.dim(i);
    else
      throw ShapeError("broadcast: incompatible dims " + a.shape_str() + " vs " + b.shape_str());
  }
  return out;
}

// Applies fn(out_flat, a_flat, b_flat) over the broadcast domain.
template <typename F>
void for_broadcast(const std::vector<int>& out_shape, const Tensor& a, const Tensor& b, F&& fn) {
  const BroadcastIter ia(out_shape, a), ib(out_shape, b);
  const int nd = static_cast<int>(out_shape.size());
  std::vector<int> idx(nd, 0);
  const size_t total = shape_count(out_shape);
  size_t fa = 0, fb = 0;
  for (size_t o = 0; o < total; ++o) {
    fn(o, fa, fb);
    for (int d = nd - 1; d >= 0; --d) {
      ++idx[d];
      fa += ia.in_strides[d];
      fb += ib.in_strides[d];
      if (idx[d] < out_shape[d]) break;
      fa -= static_cast<size_t>(idx[d]) * ia.in_strides[d];
      fb -= static_cast<size_t>(idx[d]) * ib.in_strides[d];
      idx[d] = 0;
    }
  }
}

Tensor reduce_to_shape(const Tensor& grad, const std::vector<int>& shape) {
  if (grad.shape() == shape) return grad;
  Tensor out(shape);
  const BroadcastIter it(grad.shape(), out);
  const int nd = grad.ndim();
  std::vector<int> idx(nd, 0);
  size_t f = 0;
  for (size_t o = 0; o < grad.size(); ++o) {
    out[f] += grad[o];
    for (int d = nd - 1; d >= 0; --d) {
      ++idx[d];
      f += it.in_strides[d];
      if (idx[d] < grad.dim(d)) break;
      f -= static_cast<size_t>(idx[d]) * it.in_strides[d];
      idx[d] = 0;
    }
  }
  return out;
}

void accumulate(Tensor& dst, const Tensor& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var add(const Var& a, const Var& b) {
  const auto out_shape = broadcast_shape(a.value(), b.value());
  Tensor out(out_shape);
  for_broadcast(out_shape, a.value(), b.value(),
                [&](size_t o, size_t fa, size_t fb) { out[o] = a.value()[fa] + b.value()[fb]; });
  return make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      accumulate(p.ensure_grad(), reduce_to_shape(self.grad, p.value.shape()));
    }
  });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
  const auto out_shape = broadcast_shape(a.value(), b.value());
  Tensor out(out_shape);
  for_broadcast(out_shape, a.value(), b.value(),
                [&](size_t o, size_t fa, size_t fb) { out[o] = a.value()[fa] * b.value()[fb]; });
  return make_op(std::move(out), {a.node(), b.node()}, [out_shape](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor ga(self.grad.shape());
      for_broadcast(out_shape, pa.value, pb.value,
                    [&](size_t o, size_t, size_t fb) { ga[o] = self.grad[o] * pb.value[fb]; });
      accumulate(pa.ensure_grad(), reduce_to_shape(ga, pa.value.shape()));
    }
    if (pb.requires_grad) {
      Tensor gb(self.grad.shape());
      for_broadcast(out_shape, pa.value, pb.value,
                    [&](size_t o, size_t fa, size_t) { gb[o] = self.grad[o] * pa.value[fa]; });
      accumulate(pb.ensure_grad(), reduce_to_shape(gb, pb.value.shape()));
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return make_op(std::move(out), {a.node()}, [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] += s;
  return make_op(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    accumulate(p.ensure_grad(), self.grad);
  });
}

Var leaky_relu(const Var& x, double alpha) {
  Tensor out = x.value();
  for (size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] *= alpha;
  return make_op(std::move(out), {x.node()}, [alpha](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * (p.value[i] > 0.0 ? 1.0 : alpha);
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return make_op(std::move(out), {x.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Var abs_op(const Var& x) {
  Tensor out = x.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::abs(out[i]);
  return make_op(std::move(out), {x.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) {
      const double v = p.value[i];
      g[i] += self.grad[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    }
  });
}

Var sum_all(const Var& x) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x.value()[i];
  return make_op(Tensor::scalar(s), {x.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Var mean_all(const Var& x) {
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x.value()[i];
  return make_op(Tensor::scalar(s / n), {x.node()}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] / n;
  });
}

Var mean_axis(const Var& x, int axis) {
  const auto& shape = x.shape();
  check(axis >= 0 && axis < static_cast<int>(shape.size()), "mean_axis: bad axis");
  std::vector<int> out_shape;
  for (int i = 0; i < static_cast<int>(shape.size()); ++i)
    if (i != axis) out_shape.push_back(shape[i]);
  if (out_shape.empty()) out_shape.push_back(1);

  size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) inner *= shape[i];
  const size_t n = shape[axis];

  Tensor out(out_shape);
  for (size_t o = 0; o < outer; ++o)
    for (size_t k = 0; k < n; ++k)
      for (size_t i = 0; i < inner; ++i)
        out[o * inner + i] += x.value()[(o * n + k) * inner + i] / n;

  return make_op(std::move(out), {x.node()}, [outer, inner, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (size_t o = 0; o < outer; ++o)
      for (size_t k = 0; k < n; ++k)
        for (size_t i = 0; i < inner; ++i)
          g[(o * n + k) * inner + i] += self.grad[o * inner + i] / n;
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  check(shape_count(shape) == x.size(), "reshape: element count mismatch");
  Tensor out(shape);
  std::copy(x.value().data(), x.value().data() + x.size(), out.data());
  return make_op(std::move(out), {x.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

namespace {

Tensor permute_tensor(const Tensor& x, const std::vector<int>& perm) {
  const int nd = x.ndim();
  std::vector<int> out_shape(nd);
  for (int i = 0; i < nd; ++i) out_shape[i] = x.dim(perm[i]);
  Tensor out(out_shape);
  const auto in_st = x.strides();
  std::vector<size_t> step(nd);
  for (int i = 0; i < nd; ++i) step[i] = in_st[perm[i]];
  std::vector<int> idx(nd, 0);
  size_t src = 0;
  for (size_t o = 0; o < out.size(); ++o) {
    out[o] = x[src];
    for (int d = nd - 1; d >= 0; --d) {
      ++idx[d];
      src += step[d];
      if (idx[d] < out_shape[d]) break;
      src -= static_cast<size_t>(idx[d]) * step[d];
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace

Var permute(const Var& x, const std::vector<int>& perm) {
  check(static_cast<int>(perm.size()) == x.value().ndim(), "permute: rank mismatch");
  std::vector<int> inv(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
  Tensor out = permute_tensor(x.value(), perm);
  return make_op(std::move(out), {x.node()}, [inv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    accumulate(p.ensure_grad(), permute_tensor(self.grad, inv));
  });
}

Var pad(const Var& x, const std::vector<std::pair<int, int>>& pads) {
  const int nd = x.value().ndim();
  check(static_cast<int>(pads.size()) == nd, "pad: rank mismatch");
  std::vector<int> out_shape(nd);
  for (int i = 0; i < nd; ++i) out_shape[i] = x.value().dim(i) + pads[i].first + pads[i].second;
  Tensor out(out_shape);
  const auto out_st = Tensor(out_shape).strides();
  const int total_in = static_cast<int>(x.size());
  std::vector<int> idx(nd, 0);
  for (int f = 0; f < total_in; ++f) {
    size_t o = 0;
    for (int d = 0; d < nd; ++d) o += static_cast<size_t>(idx[d] + pads[d].first) * out_st[d];
    out[o] = x.value()[f];
    for (int d = nd - 1; d >= 0; --d) {
      if (++idx[d] < x.value().dim(d)) break;
      idx[d] = 0;
    }
  }
  return make_op(std::move(out), {x.node()}, [pads, nd](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    const auto out_st = self.grad.strides();
    std::vector<int> idx(nd, 0);
    for (size_t f = 0; f < g.size(); ++f) {
      size_t o = 0;
      for (int d = 0; d < nd; ++d) o += static_cast<size_t>(idx[d] + pads[d].first) * out_st[d];
      g[f] += self.grad[o];
      for (int d = nd - 1; d >= 0; --d) {
        if (++idx[d] < p.value.dim(d)) break;
        idx[d] = 0;
      }
    }
  });
}

Var slice(const Var& x, const std::vector<std::pair<int, int>>& start_len) {
  const int nd = x.value().ndim();
  check(static_cast<int>(start_len.size()) == nd, "slice: rank mismatch");
  std::vector<int> out_shape(nd);
  for (int i = 0; i < nd; ++i) {
    check(start_len[i].first >= 0 && start_len[i].first + start_len[i].second <= x.value().dim(i),
          "slice: out of bounds");
    out_shape[i] = start_len[i].second;
  }
  Tensor out(out_shape);
  const auto in_st = x.value().strides();
  std::vector<int> idx(nd, 0);
  for (size_t o = 0; o < out.size(); ++o) {
    size_t f = 0;
    for (int d = 0; d < nd; ++d) f += static_cast<size_t>(idx[d] + start_len[d].first) * in_st[d];
    out[o] = x.value()[f];
    for (int d = nd - 1; d >= 0; --d) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return make_op(std::move(out), {x.node()}, [start_len, nd](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    const auto in_st = p.value.strides();
    std::vector<int> idx(nd, 0);
    for (size_t o = 0; o < self.grad.size(); ++o) {
      size_t f = 0;
      for (int d = 0; d < nd; ++d)
        f += static_cast<size_t>(idx[d] + start_len[d].first) * in_st[d];
      g[f] += self.grad[o];
      for (int d = nd - 1; d >= 0; --d) {
        if (++idx[d] < self.grad.dim(d)) break;
        idx[d] = 0;
      }
    }
  });
}

Var concat(const std::vector<Var>& xs, int axis) {
  check(!xs.empty(), "concat: empty input list");
  const int nd = xs[0].value().ndim();
  check(axis >= 0 && axis < nd, "concat: bad axis");
  std::vector<int> out_shape = xs[0].shape();
  for (size_t k = 1; k < xs.size(); ++k) {
    for (int d = 0; d < nd; ++d)
      if (d != axis)
        check(xs[k].value().dim(d) == out_shape[d], "concat: non-axis dims must match");
    out_shape[axis] += xs[k].value().dim(axis);
  }

  size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[i];
  for (int i = axis + 1; i < nd; ++i) inner *= out_shape[i];

  Tensor out(out_shape);
  std::vector<NodePtr> parents;
  std::vector<size_t> axis_sizes;
  size_t offset = 0;
  for (const Var& v : xs) {
    const size_t a = v.value().dim(axis);
    for (size_t o = 0; o < outer; ++o)
      std::copy(v.value().data() + o * a * inner, v.value().data() + (o + 1) * a * inner,
                out.data() + (o * out_shape[axis] + offset) * inner);
    offset += a;
    parents.push_back(v.node());
    axis_sizes.push_back(a);
  }

  const size_t axis_total = out_shape[axis];
  return make_op(std::move(out), std::move(parents),
                 [outer, inner, axis_total, axis_sizes](Node& self) {
                   size_t offset = 0;
                   for (size_t k = 0; k < self.parents.size(); ++k) {
                     Node& p = *self.parents[k];
                     const size_t a = axis_sizes[k];
                     if (p.requires_grad) {
                       Tensor& g = p.ensure_grad();
                       for (size_t o = 0; o < outer; ++o)
                         for (size_t i = 0; i < a * inner; ++i)
                           g[o * a * inner + i] +=
                               self.grad[(o * axis_total + offset) * inner + i];
                     }
                     offset += a;
                   }
                 });
}

namespace {

Tensor roll_tensor(const Tensor& x, const std::vector<int>& shifts) {
  const int nd = x.ndim();
  Tensor out(x.shape());
  const auto st = x.strides();
  std::vector<int> idx(nd, 0);
  for (size_t o = 0; o < out.size(); ++o) {
    size_t f = 0;
    for (int d = 0; d < nd; ++d) {
      int s = (idx[d] - shifts[d]) % x.dim(d);
      if (s < 0) s += x.dim(d);
      f += static_cast<size_t>(s) * st[d];
    }
    out[o] = x[f];
    for (int d = nd - 1; d >= 0; --d) {
      if (++idx[d] < x.dim(d)) break;
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace

Var roll(const Var& x, const std::vector<int>& shifts) {
  check(static_cast<int>(shifts.size()) == x.value().ndim(), "roll: rank mismatch");
  Tensor out = roll_tensor(x.value(), shifts);
  return make_op(std::move(out), {x.node()}, [shifts](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    std::vector<int> inv(shifts.size());
    for (size_t i = 0; i < shifts.size(); ++i) inv[i] = -shifts[i];
    accumulate(p.ensure_grad(), roll_tensor(self.grad, inv));
  });
}

Var linear_lastdim(const Var& x, const Var& w, const Var& b) {
  const int nd = x.value().ndim();
  const int cin = x.value().dim(nd - 1);
  check(w.value().ndim() == 2 && w.value().dim(0) == cin, "linear: weight shape mismatch");
  const int cout = w.value().dim(1);
  const size_t rows = x.size() / cin;

  std::vector<int> out_shape = x.shape();
  out_shape[nd - 1] = cout;
  Tensor out(out_shape);
  {
    MapCM X(x.value().data(), rows, cin);
    MapCM W(w.value().data(), cin, cout);
    MapM O(out.data(), rows, cout);
    O.noalias() = X * W;
    if (b.defined()) {
      check(b.value().size() == static_cast<size_t>(cout), "linear: bias size mismatch");
      for (size_t r = 0; r < rows; ++r)
        for (int c = 0; c < cout; ++c) out[r * cout + c] += b.value()[c];
    }
  }
  return make_op(std::move(out), {x.node(), w.node(), b.defined() ? b.node() : nullptr},
                 [rows, cin, cout](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pw = *self.parents[1];
                   MapCM G(self.grad.data(), rows, cout);
                   if (px.requires_grad) {
                     MapCM W(pw.value.data(), cin, cout);
                     MapM GX(px.ensure_grad().data(), rows, cin);
                     GX.noalias() += G * W.transpose();
                   }
                   if (pw.requires_grad) {
                     MapCM X(px.value.data(), rows, cin);
                     MapM GW(pw.ensure_grad().data(), cin, cout);
                     GW.noalias() += X.transpose() * G;
                   }
                   if (self.parents[2] && self.parents[2]->requires_grad) {
                     Tensor& gb = self.parents[2]->ensure_grad();
                     for (size_t r = 0; r < rows; ++r)
                       for (int c = 0; c < cout; ++c) gb[c] += self.grad[r * cout + c];
                   }
                 });
}

Var bmm(const Var& a, const Var& b) {
  check(a.value().ndim() == 3 && b.value().ndim() == 3, "bmm: need 3D tensors");
  const int m = a.value().dim(0), r = a.value().dim(1), k = a.value().dim(2);
  check(b.value().dim(0) == m && b.value().dim(1) == k, "bmm: shape mismatch");
  const int c = b.value().dim(2);

  Tensor out({m, r, c});
  for (int i = 0; i < m; ++i) {
    MapCM A(a.value().data() + static_cast<size_t>(i) * r * k, r, k);
    MapCM B(b.value().data() + static_cast<size_t>(i) * k * c, k, c);
    MapM O(out.data() + static_cast<size_t>(i) * r * c, r, c);
    O.noalias() = A * B;
  }
  return make_op(std::move(out), {a.node(), b.node()}, [m, r, k, c](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (int i = 0; i < m; ++i) {
      MapCM G(self.grad.data() + static_cast<size_t>(i) * r * c, r, c);
      if (pa.requires_grad) {
        MapCM B(pb.value.data() + static_cast<size_t>(i) * k * c, k, c);
        MapM GA(pa.ensure_grad().data() + static_cast<size_t>(i) * r * k, r, k);
        GA.noalias() += G * B.transpose();
      }
      if (pb.requires_grad) {
        MapCM A(pa.value.data() + static_cast<size_t>(i) * r * k, r, k);
        MapM GB(pb.ensure_grad().data() + static_cast<size_t>(i) * k * c, k, c);
        GB.noalias() += A.transpose() * G;
      }
    }
  });
}

Var softmax_lastdim(const Var& x) {
  const int nd = x.value().ndim();
  const size_t n = x.value().dim(nd - 1);
  const size_t rows = x.size() / n;
  Tensor out = x.value();
  for (size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
      row[i] = std::exp(row[i] - mx);
      s += row[i];
    }
    for (size_t i = 0; i < n; ++i) row[i] /= s;
  }
  return make_op(std::move(out), {x.node()}, [rows, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* dy = self.grad.data() + r * n;
      double dot = 0.0;
      for (size_t i = 0; i < n; ++i) dot += dy[i] * y[i];
      for (size_t i = 0; i < n; ++i) g[r * n + i] += y[i] * (dy[i] - dot);
    }
  });
}

Var layer_norm_lastdim(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const int nd = x.value().ndim();
  const size_t n = x.value().dim(nd - 1);
  const size_t rows = x.size() / n;
  check(gamma.value().size() == n && beta.value().size() == n, "layer_norm: affine size mismatch");

  Tensor out(x.shape());
  Tensor xhat(x.shape());
  Tensor inv_std({static_cast<int>(rows)});
  for (size_t r = 0; r < rows; ++r) {
    const double* row = x.value().data() + r * n;
    double mu = 0.0;
    for (size_t i = 0; i < n; ++i) mu += row[i];
    mu /= n;
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (size_t i = 0; i < n; ++i) {
      const double xi = (row[i] - mu) * is;
      xhat[r * n + i] = xi;
      out[r * n + i] = gamma.value()[i] * xi + beta.value()[i];
    }
  }
  return make_op(std::move(out), {x.node(), gamma.node(), beta.node()},
                 [rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pg = *self.parents[1];
                   Node& pb = *self.parents[2];
                   for (size_t r = 0; r < rows; ++r) {
                     const double* dy = self.grad.data() + r * n;
                     const double* xh = xhat.data() + r * n;
                     if (pg.requires_grad) {
                       Tensor& gg = pg.ensure_grad();
                       for (size_t i = 0; i < n; ++i) gg[i] += dy[i] * xh[i];
                     }
                     if (pb.requires_grad) {
                       Tensor& gb = pb.ensure_grad();
                       for (size_t i = 0; i < n; ++i) gb[i] += dy[i];
                     }
                     if (px.requires_grad) {
                       Tensor& gx = px.ensure_grad();
                       const double* gam = pg.value.data();
                       double m1 = 0.0, m2 = 0.0;
                       for (size_t i = 0; i < n; ++i) {
                         const double d = dy[i] * gam[i];
                         m1 += d;
                         m2 += d * xh[i];
                       }
                       m1 /= n;
                       m2 /= n;
                       for (size_t i = 0; i < n; ++i) {
                         const double d = dy[i] * gam[i];
                         gx[r * n + i] += inv_std[r] * (d - m1 - xh[i] * m2);
                       }
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// Spatial ops
// ---------------------------------------------------------------------------

namespace {

struct ConvGeom {
  int b, ci, h, w, co, kh, kw, stride, pad, ho, wo;
};

void im2col(const double* x, const ConvGeom& g, double* col) {
  // col: (ci*kh*kw, ho*wo)
  const size_t plane = static_cast<size_t>(g.h) * g.w;
  for (int c = 0; c < g.ci; ++c)
    for (int i = 0; i < g.kh; ++i)
      for (int j = 0; j < g.kw; ++j) {
        double* row = col + ((static_cast<size_t>(c) * g.kh + i) * g.kw + j) *
                                (static_cast<size_t>(g.ho) * g.wo);
        for (int oy = 0; oy < g.ho; ++oy) {
          const int y = oy * g.stride + i - g.pad;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int xx = ox * g.stride + j - g.pad;
            row[static_cast<size_t>(oy) * g.wo + ox] =
                (y >= 0 && y < g.h && xx >= 0 && xx < g.w) ? x[c * plane + y * g.w + xx] : 0.0;
          }
        }
      }
}

void col2im_accum(const double* col, const ConvGeom& g, double* x) {
  const size_t plane = static_cast<size_t>(g.h) * g.w;
  for (int c = 0; c < g.ci; ++c)
    for (int i = 0; i < g.kh; ++i)
      for (int j = 0; j < g.kw; ++j) {
        const double* row = col + ((static_cast<size_t>(c) * g.kh + i) * g.kw + j) *
                                      (static_cast<size_t>(g.ho) * g.wo);
        for (int oy = 0; oy < g.ho; ++oy) {
          const int y = oy * g.stride + i - g.pad;
          if (y < 0 || y >= g.h) continue;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int xx = ox * g.stride + j - g.pad;
            if (xx < 0 || xx >= g.w) continue;
            x[c * plane + y * g.w + xx] += row[static_cast<size_t>(oy) * g.wo + ox];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check(x.value().ndim() == 4 && w.value().ndim() == 4, "conv2d: need NCHW x and OIHW w");
  ConvGeom g;
  g.b = x.value().dim(0);
  g.ci = x.value().dim(1);
  g.h = x.value().dim(2);
  g.w = x.value().dim(3);
  g.co = w.value().dim(0);
  check(w.value().dim(1) == g.ci, "conv2d: channel mismatch");
  g.kh = w.value().dim(2);
  g.kw = w.value().dim(3);
  g.stride = stride;
  g.pad = pad;
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
  check(g.ho > 0 && g.wo > 0, "conv2d: output would be empty");

  const int K = g.ci * g.kh * g.kw;
  const size_t opix = static_cast<size_t>(g.ho) * g.wo;
  Tensor out({g.b, g.co, g.ho, g.wo});
  Tensor col({K, static_cast<int>(opix)});
  for (int n = 0; n < g.b; ++n) {
    im2col(x.value().data() + static_cast<size_t>(n) * g.ci * g.h * g.w, g, col.data());
    MapCM W(w.value().data(), g.co, K);
    MapCM C(col.data(), K, opix);
    MapM O(out.data() + static_cast<size_t>(n) * g.co * opix, g.co, opix);
    O.noalias() = W * C;
    if (b.defined())
      for (int c = 0; c < g.co; ++c)
        for (size_t p = 0; p < opix; ++p)
          out[static_cast<size_t>(n) * g.co * opix + c * opix + p] += b.value()[c];
  }

  return make_op(std::move(out), {x.node(), w.node(), b.defined() ? b.node() : nullptr},
                 [g, K, opix](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pw = *self.parents[1];
                   Tensor col({K, static_cast<int>(opix)});
                   Tensor dcol({K, static_cast<int>(opix)});
                   for (int n = 0; n < g.b; ++n) {
                     MapCM G(self.grad.data() + static_cast<size_t>(n) * g.co * opix, g.co, opix);
                     if (pw.requires_grad) {
                       im2col(px.value.data() + static_cast<size_t>(n) * g.ci * g.h * g.w, g,
                              col.data());
                       MapCM C(col.data(), K, opix);
                       MapM GW(pw.ensure_grad().data(), g.co, K);
                       GW.noalias() += G * C.transpose();
                     }
                     if (px.requires_grad) {
                       MapCM W(pw.value.data(), g.co, K);
                       MapM DC(dcol.data(), K, opix);
                       DC.noalias() = W.transpose() * G;
                       col2im_accum(dcol.data(), g,
                                    px.ensure_grad().data() +
                                        static_cast<size_t>(n) * g.ci * g.h * g.w);
                     }
                     if (self.parents[2] && self.parents[2]->requires_grad) {
                       Tensor& gb = self.parents[2]->ensure_grad();
                       for (int c = 0; c < g.co; ++c)
                         for (size_t p = 0; p < opix; ++p)
                           gb[c] += self.grad[static_cast<size_t>(n) * g.co * opix + c * opix + p];
                     }
                   }
                 });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad,
                     int output_padding) {
  check(x.value().ndim() == 4 && w.value().ndim() == 4, "conv_transpose2d: bad ranks");
  const int B = x.value().dim(0), cin = x.value().dim(1);
  const int h = x.value().dim(2), wd = x.value().dim(3);
  check(w.value().dim(0) == cin, "conv_transpose2d: channel mismatch");
  const int cout = w.value().dim(1), kh = w.value().dim(2), kw = w.value().dim(3);
  const int ho = (h - 1) * stride - 2 * pad + kh + output_padding;
  const int wo = (wd - 1) * stride - 2 * pad + kw + output_padding;
  check(ho > 0 && wo > 0, "conv_transpose2d: output would be empty");

  // The output-side geometry reuses the conv2d im2col with x and out swapped.
  ConvGeom g;
  g.b = B;
  g.ci = cout;  // "input" of the implicit forward conv is our output
  g.h = ho;
  g.w = wo;
  g.co = cin;
  g.kh = kh;
  g.kw = kw;
  g.stride = stride;
  g.pad = pad;
  g.ho = h;
  g.wo = wd;

  const int K = cout * kh * kw;
  const size_t ipix = static_cast<size_t>(h) * wd;
  const size_t opix = static_cast<size_t>(ho) * wo;

  Tensor out({B, cout, ho, wo});
  Tensor colT({K, static_cast<int>(ipix)});
  for (int n = 0; n < B; ++n) {
    MapCM W(w.value().data(), cin, K);
    MapCM X(x.value().data() + static_cast<size_t>(n) * cin * ipix, cin, ipix);
    MapM CT(colT.data(), K, ipix);
    CT.noalias() = W.transpose() * X;
    col2im_accum(colT.data(), g, out.data() + static_cast<size_t>(n) * cout * opix);
    if (b.defined())
      for (int c = 0; c < cout; ++c)
        for (size_t p = 0; p < opix; ++p)
          out[static_cast<size_t>(n) * cout * opix + c * opix + p] += b.value()[c];
  }

  return make_op(std::move(out), {x.node(), w.node(), b.defined() ? b.node() : nullptr},
                 [g, K, ipix, opix, B, cin, cout](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pw = *self.parents[1];
                   Tensor col({K, static_cast<int>(ipix)});
                   for (int n = 0; n < B; ++n) {
                     im2col(self.grad.data() + static_cast<size_t>(n) * cout * opix, g,
                            col.data());
                     MapCM C(col.data(), K, ipix);
                     if (px.requires_grad) {
                       MapCM W(pw.value.data(), cin, K);
                       MapM GX(px.ensure_grad().data() + static_cast<size_t>(n) * cin * ipix, cin,
                               ipix);
                       GX.noalias() += W * C;
                     }
                     if (pw.requires_grad) {
                       MapCM X(px.value.data() + static_cast<size_t>(n) * cin * ipix, cin, ipix);
                       MapM GW(pw.ensure_grad().data(), cin, K);
                       GW.noalias() += X * C.transpose();
                     }
                     if (self.parents[2] && self.parents[2]->requires_grad) {
                       Tensor& gb = self.parents[2]->ensure_grad();
                       for (int c = 0; c < cout; ++c)
                         for (size_t p = 0; p < opix; ++p)
                           gb[c] +=
                               self.grad[static_cast<size_t>(n) * cout * opix + c * opix + p];
                     }
                   }
                 });
}

namespace {

struct BilinearTap {
  int y0, x0, y1, x1;
  double wy, wx;  // weights of the (y1, x1) side
  bool valid00, valid01, valid10, valid11;
};

BilinearTap bilinear_tap(double y, double x, int h, int w) {
  BilinearTap t;
  const double fy = std::floor(y), fx = std::floor(x);
  t.y0 = static_cast<int>(fy);
  t.x0 = static_cast<int>(fx);
  t.y1 = t.y0 + 1;
  t.x1 = t.x0 + 1;
  t.wy = y - fy;
  t.wx = x - fx;
  t.valid00 = t.y0 >= 0 && t.y0 < h && t.x0 >= 0 && t.x0 < w;
  t.valid01 = t.y0 >= 0 && t.y0 < h && t.x1 >= 0 && t.x1 < w;
  t.valid10 = t.y1 >= 0 && t.y1 < h && t.x0 >= 0 && t.x0 < w;
  t.valid11 = t.y1 >= 0 && t.y1 < h && t.x1 >= 0 && t.x1 < w;
  return t;
}

}  // namespace

Var deform_conv2d(const Var& x, const Var& offsets, const Var& w, const Var& b, int pad) {
  check(x.value().ndim() == 4 && offsets.value().ndim() == 4 && w.value().ndim() == 4,
        "deform_conv2d: bad ranks");
  const int B = x.value().dim(0), ci = x.value().dim(1);
  const int h = x.value().dim(2), wd = x.value().dim(3);
  const int co = w.value().dim(0), kh = w.value().dim(2), kw = w.value().dim(3);
  check(w.value().dim(1) == ci, "deform_conv2d: channel mismatch");
  const int ho = h + 2 * pad - kh + 1, wo = wd + 2 * pad - kw + 1;
  check(offsets.value().dim(0) == B && offsets.value().dim(1) == 2 * kh * kw &&
            offsets.value().dim(2) == ho && offsets.value().dim(3) == wo,
        "deform_conv2d: offset shape mismatch");

  const size_t xplane = static_cast<size_t>(h) * wd;
  const size_t oplane = static_cast<size_t>(ho) * wo;
  const auto xv = x.value().data();
  const auto ov = offsets.value().data();
  const auto wv = w.value().data();

  Tensor out({B, co, ho, wo});
  for (int n = 0; n < B; ++n)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        for (int i = 0; i < kh; ++i)
          for (int j = 0; j < kw; ++j) {
            const int tap = i * kw + j;
            const double dy =
                ov[((static_cast<size_t>(n) * 2 * kh * kw + 2 * tap) * ho + oy) * wo + ox];
            const double dx =
                ov[((static_cast<size_t>(n) * 2 * kh * kw + 2 * tap + 1) * ho + oy) * wo + ox];
            const double sy = oy + i - pad + dy;
            const double sx = ox + j - pad + dx;
            const BilinearTap t = bilinear_tap(sy, sx, h, wd);
            for (int c = 0; c < ci; ++c) {
              const double* plane = xv + (static_cast<size_t>(n) * ci + c) * xplane;
              double v = 0.0;
              if (t.valid00) v += (1 - t.wy) * (1 - t.wx) * plane[t.y0 * wd + t.x0];
              if (t.valid01) v += (1 - t.wy) * t.wx * plane[t.y0 * wd + t.x1];
              if (t.valid10) v += t.wy * (1 - t.wx) * plane[t.y1 * wd + t.x0];
              if (t.valid11) v += t.wy * t.wx * plane[t.y1 * wd + t.x1];
              for (int oc = 0; oc < co; ++oc)
                out[((static_cast<size_t>(n) * co + oc) * ho + oy) * wo + ox] +=
                    v * wv[((static_cast<size_t>(oc) * ci + c) * kh + i) * kw + j];
            }
          }
        if (b.defined())
          for (int oc = 0; oc < co; ++oc)
            out[((static_cast<size_t>(n) * co + oc) * ho + oy) * wo + ox] += b.value()[oc];
      }

  return make_op(
      std::move(out), {x.node(), offsets.node(), w.node(), b.defined() ? b.node() : nullptr},
      [B, ci, h, wd, co, kh, kw, pad, ho, wo, xplane, oplane](Node& self) {
        Node& px = *self.parents[0];
        Node& po = *self.parents[1];
        Node& pw = *self.parents[2];
        const auto xv = px.value.data();
        const auto ov = po.value.data();
        const auto wv = pw.value.data();
        double* gx = px.requires_grad ? px.ensure_grad().data() : nullptr;
        double* go = po.requires_grad ? po.ensure_grad().data() : nullptr;
        double* gw = pw.requires_grad ? pw.ensure_grad().data() : nullptr;
        double* gb = (self.parents[3] && self.parents[3]->requires_grad)
                         ? self.parents[3]->ensure_grad().data()
                         : nullptr;

        for (int n = 0; n < B; ++n)
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
              if (gb)
                for (int oc = 0; oc < co; ++oc)
                  gb[oc] += self.grad[((static_cast<size_t>(n) * co + oc) * ho + oy) * wo + ox];
              for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j) {
                  const int tap = i * kw + j;
                  const size_t oidx_y =
                      ((static_cast<size_t>(n) * 2 * kh * kw + 2 * tap) * ho + oy) * wo + ox;
                  const size_t oidx_x =
                      ((static_cast<size_t>(n) * 2 * kh * kw + 2 * tap + 1) * ho + oy) * wo + ox;
                  const double sy = oy + i - pad + ov[oidx_y];
                  const double sx = ox + j - pad + ov[oidx_x];
                  const BilinearTap t = bilinear_tap(sy, sx, h, wd);
                  for (int c = 0; c < ci; ++c) {
                    const double* plane = xv + (static_cast<size_t>(n) * ci + c) * xplane;
                    const double v00 = t.valid00 ? plane[t.y0 * wd + t.x0] : 0.0;
                    const double v01 = t.valid01 ? plane[t.y0 * wd + t.x1] : 0.0;
                    const double v10 = t.valid10 ? plane[t.y1 * wd + t.x0] : 0.0;
                    const double v11 = t.valid11 ? plane[t.y1 * wd + t.x1] : 0.0;
                    const double v = (1 - t.wy) * (1 - t.wx) * v00 + (1 - t.wy) * t.wx * v01 +
                                     t.wy * (1 - t.wx) * v10 + t.wy * t.wx * v11;
                    // Chain through every output channel that uses this tap.
                    double gsum = 0.0;
                    for (int oc = 0; oc < co; ++oc) {
                      const double gout =
                          self.grad[((static_cast<size_t>(n) * co + oc) * ho + oy) * wo + ox];
                      const double wgt = wv[((static_cast<size_t>(oc) * ci + c) * kh + i) * kw + j];
                      gsum += gout * wgt;
                      if (gw)
                        gw[((static_cast<size_t>(oc) * ci + c) * kh + i) * kw + j] += gout * v;
                    }
                    if (gx) {
                      double* gplane = gx + (static_cast<size_t>(n) * ci + c) * xplane;
                      if (t.valid00) gplane[t.y0 * wd + t.x0] += gsum * (1 - t.wy) * (1 - t.wx);
                      if (t.valid01) gplane[t.y0 * wd + t.x1] += gsum * (1 - t.wy) * t.wx;
                      if (t.valid10) gplane[t.y1 * wd + t.x0] += gsum * t.wy * (1 - t.wx);
                      if (t.valid11) gplane[t.y1 * wd + t.x1] += gsum * t.wy * t.wx;
                    }
                    if (go) {
                      const double dv_dy = ((1 - t.wx) * (v10 - v00) + t.wx * (v11 - v01));
                      const double dv_dx = ((1 - t.wy) * (v01 - v00) + t.wy * (v11 - v10));
                      go[oidx_y] += gsum * dv_dy;
                      go[oidx_x] += gsum * dv_dx;
                    }
                  }
                }
            }
        (void)oplane;
      });
}

Var instance_norm2d(const Var& x, const Var& gamma, const Var& beta, double eps) {
  check(x.value().ndim() == 4, "instance_norm2d: need NCHW");
  const int B = x.value().dim(0), C = x.value().dim(1);
  const size_t plane = static_cast<size_t>(x.value().dim(2)) * x.value().dim(3);
  check(gamma.value().size() == static_cast<size_t>(C) &&
            beta.value().size() == static_cast<size_t>(C),
        "instance_norm2d: affine size mismatch");

  Tensor out(x.shape());
  Tensor xhat(x.shape());
  Tensor inv_std({B, C});
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const double* p = x.value().data() + (static_cast<size_t>(n) * C + c) * plane;
      double mu = 0.0;
      for (size_t i = 0; i < plane; ++i) mu += p[i];
      mu /= plane;
      double var = 0.0;
      for (size_t i = 0; i < plane; ++i) var += (p[i] - mu) * (p[i] - mu);
      var /= plane;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(n) * C + c] = is;
      for (size_t i = 0; i < plane; ++i) {
        const double xh = (p[i] - mu) * is;
        xhat[(static_cast<size_t>(n) * C + c) * plane + i] = xh;
        out[(static_cast<size_t>(n) * C + c) * plane + i] =
            gamma.value()[c] * xh + beta.value()[c];
      }
    }

  return make_op(std::move(out), {x.node(), gamma.node(), beta.node()},
                 [B, C, plane, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pg = *self.parents[1];
                   Node& pb = *self.parents[2];
                   for (int n = 0; n < B; ++n)
                     for (int c = 0; c < C; ++c) {
                       const size_t base = (static_cast<size_t>(n) * C + c) * plane;
                       const double* dy = self.grad.data() + base;
                       const double* xh = xhat.data() + base;
                       if (pg.requires_grad) {
                         double s = 0.0;
                         for (size_t i = 0; i < plane; ++i) s += dy[i] * xh[i];
                         pg.ensure_grad()[c] += s;
                       }
                       if (pb.requires_grad) {
                         double s = 0.0;
                         for (size_t i = 0; i < plane; ++i) s += dy[i];
                         pb.ensure_grad()[c] += s;
                       }
                       if (px.requires_grad) {
                         Tensor& gx = px.ensure_grad();
                         const double gam = pg.value[c];
                         double m1 = 0.0, m2 = 0.0;
                         for (size_t i = 0; i < plane; ++i) {
                           m1 += dy[i] * gam;
                           m2 += dy[i] * gam * xh[i];
                         }
                         m1 /= plane;
                         m2 /= plane;
                         const double is = inv_std[static_cast<size_t>(n) * C + c];
                         for (size_t i = 0; i < plane; ++i)
                           gx[base + i] += is * (dy[i] * gam - m1 - xh[i] * m2);
                       }
                     }
                 });
}

Var resize_bilinear2d(const Var& x, int out_h, int out_w) {
  check(x.value().ndim() == 4, "resize_bilinear2d: need NCHW");
  const int B = x.value().dim(0), C = x.value().dim(1);
  const int h = x.value().dim(2), w = x.value().dim(3);
  if (h == out_h && w == out_w) return reshape(x, x.shape());

  // Precompute the clamped source taps (align_corners = false).
  struct Tap {
    int i0, i1;
    double w1;
  };
  std::vector<Tap> ty(out_h), tx(out_w);
  const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double src = std::clamp((y + 0.5) * sy - 0.5, 0.0, h - 1.0);
    ty[y].i0 = static_cast<int>(std::floor(src));
    ty[y].i1 = std::min(ty[y].i0 + 1, h - 1);
    ty[y].w1 = src - ty[y].i0;
  }
  for (int x2 = 0; x2 < out_w; ++x2) {
    const double src = std::clamp((x2 + 0.5) * sx - 0.5, 0.0, w - 1.0);
    tx[x2].i0 = static_cast<int>(std::floor(src));
    tx[x2].i1 = std::min(tx[x2].i0 + 1, w - 1);
    tx[x2].w1 = src - tx[x2].i0;
  }

  Tensor out({B, C, out_h, out_w});
  const size_t iplane = static_cast<size_t>(h) * w;
  const size_t oplane = static_cast<size_t>(out_h) * out_w;
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const double* p = x.value().data() + (static_cast<size_t>(n) * C + c) * iplane;
      double* o = out.data() + (static_cast<size_t>(n) * C + c) * oplane;
      for (int y = 0; y < out_h; ++y)
        for (int x2 = 0; x2 < out_w; ++x2) {
          const Tap& a = ty[y];
          const Tap& bb = tx[x2];
          o[static_cast<size_t>(y) * out_w + x2] =
              (1 - a.w1) * ((1 - bb.w1) * p[a.i0 * w + bb.i0] + bb.w1 * p[a.i0 * w + bb.i1]) +
              a.w1 * ((1 - bb.w1) * p[a.i1 * w + bb.i0] + bb.w1 * p[a.i1 * w + bb.i1]);
        }
    }

  return make_op(std::move(out), {x.node()},
                 [B, C, h, w, out_h, out_w, ty, tx, iplane, oplane](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   Tensor& g = p.ensure_grad();
                   for (int n = 0; n < B; ++n)
                     for (int c = 0; c < C; ++c) {
                       double* gp = g.data() + (static_cast<size_t>(n) * C + c) * iplane;
                       const double* go =
                           self.grad.data() + (static_cast<size_t>(n) * C + c) * oplane;
                       for (int y = 0; y < out_h; ++y)
                         for (int x2 = 0; x2 < out_w; ++x2) {
                           const auto& a = ty[y];
                           const auto& bb = tx[x2];
                           const double gv = go[static_cast<size_t>(y) * out_w + x2];
                           gp[a.i0 * w + bb.i0] += gv * (1 - a.w1) * (1 - bb.w1);
                           gp[a.i0 * w + bb.i1] += gv * (1 - a.w1) * bb.w1;
                           gp[a.i1 * w + bb.i0] += gv * a.w1 * (1 - bb.w1);
                           gp[a.i1 * w + bb.i1] += gv * a.w1 * bb.w1;
                         }
                     }
                 });
}

Var reflect_pad2d(const Var& x, int p) {
  check(x.value().ndim() == 4, "reflect_pad2d: need NCHW");
  const int B = x.value().dim(0), C = x.value().dim(1);
  const int h = x.value().dim(2), w = x.value().dim(3);
  check(p < h && p < w, "reflect_pad2d: pad exceeds raster");
  const int ho = h + 2 * p, wo = w + 2 * p;

  auto refl = [](int i, int n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - i - 2;
    return i;
  };

  Tensor out({B, C, ho, wo});
  const size_t iplane = static_cast<size_t>(h) * w;
  const size_t oplane = static_cast<size_t>(ho) * wo;
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const double* src = x.value().data() + (static_cast<size_t>(n) * C + c) * iplane;
      double* dst = out.data() + (static_cast<size_t>(n) * C + c) * oplane;
      for (int y = 0; y < ho; ++y)
        for (int x2 = 0; x2 < wo; ++x2)
          dst[static_cast<size_t>(y) * wo + x2] = src[refl(y - p, h) * w + refl(x2 - p, w)];
    }

  return make_op(std::move(out), {x.node()}, [B, C, h, w, p, ho, wo, iplane, oplane](Node& self) {
    Node& px = *self.parents[0];
    if (!px.requires_grad) return;
    auto refl = [](int i, int n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * n - i - 2;
      return i;
    };
    Tensor& g = px.ensure_grad();
    for (int n = 0; n < B; ++n)
      for (int c = 0; c < C; ++c) {
        double* gp = g.data() + (static_cast<size_t>(n) * C + c) * iplane;
        const double* go = self.grad.data() + (static_cast<size_t>(n) * C + c) * oplane;
        for (int y = 0; y < ho; ++y)
          for (int x2 = 0; x2 < wo; ++x2)
            gp[refl(y - p, h) * w + refl(x2 - p, w)] += go[static_cast<size_t>(y) * wo + x2];
      }
  });
}

}  // namespace uta::nn
