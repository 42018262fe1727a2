#include <doctest.h>

#include <random>

#include "test_util.hpp"
#include "uta/nn/layers.hpp"
#include "uta/nn/ops.hpp"

using namespace uta;
using nn::Tensor;
using nn::Var;
using testutil::gradcheck;
using testutil::random_tensor;

TEST_SUITE_BEGIN("nn_engine");

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  const auto st = t.strides();
  CHECK(st == std::vector<size_t>{12, 4, 1});
  CHECK(t.shape_str() == "(2,3,4)");
}

TEST_CASE("elementwise ops match closed forms and gradients") {
  std::mt19937_64 rng(1);
  std::vector<Var> in{Var(random_tensor({3, 4}, rng), true), Var(random_tensor({3, 4}, rng), true)};

  SUBCASE("add") {
    const double err = gradcheck(
        [](const std::vector<Var>& v) { return nn::mean_all(nn::add(v[0], v[1])); }, in);
    CHECK(err < 1e-6);
  }
  SUBCASE("mul") {
    const double err = gradcheck(
        [](const std::vector<Var>& v) { return nn::mean_all(nn::mul(v[0], v[1])); }, in);
    CHECK(err < 1e-6);
  }
  SUBCASE("broadcast mul reduces grads to the small operand") {
    std::vector<Var> bc{Var(random_tensor({3, 4}, rng), true),
                        Var(random_tensor({3, 1}, rng), true)};
    const double err = gradcheck(
        [](const std::vector<Var>& v) { return nn::mean_all(nn::mul(v[0], v[1])); }, bc);
    CHECK(err < 1e-6);
  }
  SUBCASE("sigmoid and leaky_relu") {
    const double err = gradcheck(
        [](const std::vector<Var>& v) {
          return nn::mean_all(nn::sigmoid(nn::leaky_relu(v[0], 0.1)));
        },
        in);
    CHECK(err < 1e-5);
  }
  SUBCASE("abs away from zero") {
    std::vector<Var> pos{Var(random_tensor({3, 4}, rng, 0.5, 1.5), true)};
    const double err = gradcheck(
        [](const std::vector<Var>& v) { return nn::mean_all(nn::abs_op(v[0])); }, pos);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("shape ops round-trip and backpropagate") {
  std::mt19937_64 rng(2);
  std::vector<Var> in{Var(random_tensor({2, 3, 4, 5}, rng), true)};

  SUBCASE("permute inverse") {
    Var p = nn::permute(in[0], {2, 0, 3, 1});
    Var back = nn::permute(p, {1, 3, 0, 2});
    for (size_t i = 0; i < in[0].size(); ++i) CHECK(back.value()[i] == in[0].value()[i]);
  }
  SUBCASE("roll inverse is bit-exact") {
    Var r = nn::roll(in[0], {1, 2, 3, 4});
    Var back = nn::roll(r, {-1, -2, -3, -4});
    for (size_t i = 0; i < in[0].size(); ++i) CHECK(back.value()[i] == in[0].value()[i]);
  }
  SUBCASE("pad then slice restores input") {
    Var p = nn::pad(in[0], {{0, 0}, {1, 2}, {0, 1}, {3, 0}});
    Var s = nn::slice(p, {{0, 2}, {1, 3}, {0, 4}, {3, 5}});
    for (size_t i = 0; i < in[0].size(); ++i) CHECK(s.value()[i] == in[0].value()[i]);
  }
  SUBCASE("composite shape pipeline gradcheck") {
    const double err = gradcheck(
        [](const std::vector<Var>& v) {
          Var x = nn::pad(v[0], {{0, 0}, {0, 1}, {1, 0}, {0, 0}});
          x = nn::permute(x, {0, 2, 1, 3});
          x = nn::roll(x, {0, 2, 1, 0});
          x = nn::reshape(x, {2, 5, 4, 5});
          x = nn::slice(x, {{0, 2}, {1, 3}, {0, 4}, {2, 2}});
          return nn::mean_all(nn::mul(x, x));
        },
        in);
    CHECK(err < 1e-6);
  }
  SUBCASE("concat gradcheck") {
    std::vector<Var> two{Var(random_tensor({2, 2, 3}, rng), true),
                         Var(random_tensor({2, 4, 3}, rng), true)};
    const double err = gradcheck(
        [](const std::vector<Var>& v) {
          Var c = nn::concat({v[0], v[1]}, 1);
          return nn::mean_all(nn::mul(c, c));
        },
        two);
    CHECK(err < 1e-6);
  }
  SUBCASE("mean_axis gradcheck") {
    const double err = gradcheck(
        [](const std::vector<Var>& v) {
          Var m = nn::mean_axis(v[0], 1);
          return nn::mean_all(nn::mul(m, m));
        },
        in);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("linear algebra ops") {
  std::mt19937_64 rng(3);

  SUBCASE("linear matches manual matmul") {
    Var x(random_tensor({4, 3}, rng), true);
    Var w(random_tensor({3, 2}, rng), true);
    Var b(random_tensor({2}, rng), true);
    Var y = nn::linear_lastdim(x, w, b);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 2; ++c) {
        double want = b.value()[c];
        for (int k = 0; k < 3; ++k) want += x.value()[r * 3 + k] * w.value()[k * 2 + c];
        CHECK(y.value()[r * 2 + c] == doctest::Approx(want).epsilon(1e-12));
      }
    std::vector<Var> in{x, w, b};
    const double err = gradcheck(
        [](const std::vector<Var>& v) {
          Var out = nn::linear_lastdim(v[0], v[1], v[2]);
          return nn::mean_all(nn::mul(out, out));
        },
        in);
    CHECK(err < 1e-6);
  }
  SUBCASE("bmm gradcheck") {
    std::vector<Var> in{Var(random_tensor({3, 2, 4}, rng), true),
                        Var(random_tensor({3, 4, 2}, rng), true)};
    const double err = gradcheck(
        [](const std::vector<Var>& v) { return nn::mean_all(nn::bmm(v[0], v[1])); }, in);
    CHECK(err < 1e-6);
  }
  SUBCASE("softmax rows sum to one and gradcheck") {
    Var x(random_tensor({5, 7}, rng), true);
    Var y = nn::softmax_lastdim(x);
    for (int r = 0; r < 5; ++r) {
      double s = 0.0;
      for (int c = 0; c < 7; ++c) s += y.value()[r * 7 + c];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    std::vector<Var> in{x};
    const double err = gradcheck(
        [](const std::vector<Var>& v) {
          Var sm = nn::softmax_lastdim(v[0]);
          return nn::mean_all(nn::mul(sm, sm));
        },
        in);
    CHECK(err < 1e-5);
  }
  SUBCASE("layer_norm gradcheck") {
    std::vector<Var> in{Var(random_tensor({4, 6}, rng), true),
                        Var(random_tensor({6}, rng, 0.5, 1.5), true),
                        Var(random_tensor({6}, rng), true)};
    const double err = gradcheck(
        [](const std::vector<Var>& v) {
          Var y = nn::layer_norm_lastdim(v[0], v[1], v[2]);
          return nn::mean_all(nn::mul(y, y));
        },
        in);
    CHECK(err < 1e-5);
  }
}

namespace {

// Direct convolution oracle, no im2col.
Tensor conv2d_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const int B = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;
  Tensor out({B, co, ho, wo});
  for (int n = 0; n < B; ++n)
    for (int oc = 0; oc < co; ++oc)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = b.size() ? b[oc] : 0.0;
          for (int c = 0; c < ci; ++c)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int y = oy * stride + i - pad;
                const int xx = ox * stride + j - pad;
                if (y < 0 || y >= h || xx < 0 || xx >= wd) continue;
                acc += x[((static_cast<size_t>(n) * ci + c) * h + y) * wd + xx] *
                       w[((static_cast<size_t>(oc) * ci + c) * kh + i) * kw + j];
              }
          out[((static_cast<size_t>(n) * co + oc) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d matches a direct oracle and gradchecks") {
  std::mt19937_64 rng(4);
  for (const auto& [stride, pad] : std::vector<std::pair<int, int>>{{1, 1}, {2, 1}, {1, 0}}) {
    Var x(random_tensor({2, 3, 6, 7}, rng), true);
    Var w(random_tensor({4, 3, 3, 3}, rng), true);
    Var b(random_tensor({4}, rng), true);
    Var y = nn::conv2d(x, w, b, stride, pad);
    const Tensor want = conv2d_oracle(x.value(), w.value(), b.value(), stride, pad);
    REQUIRE(y.value().shape() == want.shape());
    for (size_t i = 0; i < want.size(); ++i)
      CHECK(y.value()[i] == doctest::Approx(want[i]).epsilon(1e-10));

    std::vector<Var> in{x, w, b};
    const int s = stride, p = pad;
    const double err = gradcheck(
        [s, p](const std::vector<Var>& v) {
          Var out = nn::conv2d(v[0], v[1], v[2], s, p);
          return nn::mean_all(nn::mul(out, out));
        },
        in);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("conv_transpose2d doubles resolution, is the conv adjoint, gradchecks") {
  std::mt19937_64 rng(5);
  Var x(random_tensor({2, 3, 5, 6}, rng), true);
  Var w(random_tensor({3, 2, 4, 4}, rng), true);
  Var b(random_tensor({2}, rng), true);
  Var y = nn::conv_transpose2d(x, w, b, 2, 1, 0);
  CHECK(y.value().shape() == std::vector<int>{2, 2, 10, 12});

  // Adjointness: <conv(x; W), y> == <x, convT(y; W)> for zero bias. The same
  // (3,2,3,3) tensor serves as conv weight (out=3,in=2) and convT weight
  // (in=3,out=2).
  Var zb;
  Var xc(random_tensor({1, 2, 8, 8}, rng));
  Var wc(random_tensor({3, 2, 3, 3}, rng));
  Var yc(random_tensor({1, 3, 8, 8}, rng));
  Var conv_x = nn::conv2d(xc, wc, zb, 1, 1);
  Var convt_y = nn::conv_transpose2d(yc, wc, zb, 1, 1, 0);
  double lhs = 0, rhs = 0;
  for (size_t i = 0; i < conv_x.size(); ++i) lhs += conv_x.value()[i] * yc.value()[i];
  for (size_t i = 0; i < convt_y.size(); ++i) rhs += convt_y.value()[i] * xc.value()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));

  std::vector<Var> in{x, w, b};
  const double err = gradcheck(
      [](const std::vector<Var>& v) {
        Var out = nn::conv_transpose2d(v[0], v[1], v[2], 2, 1, 0);
        return nn::mean_all(nn::mul(out, out));
      },
      in);
  CHECK(err < 1e-5);
}

TEST_CASE("deform_conv2d with zero offsets equals standard convolution") {
  std::mt19937_64 rng(6);
  Var x(random_tensor({2, 1, 8, 9}, rng), true);
  Var w(random_tensor({5, 1, 3, 3}, rng), true);
  Var b(random_tensor({5}, rng), true);
  Var zero_off(Tensor({2, 18, 8, 9}), true);

  Var deformed = nn::deform_conv2d(x, zero_off, w, b, 1);
  Var standard = nn::conv2d(x, w, b, 1, 1);
  REQUIRE(deformed.value().shape() == standard.value().shape());
  for (size_t i = 0; i < deformed.size(); ++i)
    CHECK(deformed.value()[i] == doctest::Approx(standard.value()[i]).epsilon(1e-12));

  std::vector<Var> in{x, Var(random_tensor({2, 18, 8, 9}, rng, -0.8, 0.8), true), w, b};
  const double err = gradcheck(
      [](const std::vector<Var>& v) {
        Var out = nn::deform_conv2d(v[0], v[1], v[2], v[3], 1);
        return nn::mean_all(nn::mul(out, out));
      },
      in, 10, 1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("remaining spatial ops gradcheck") {
  std::mt19937_64 rng(7);
  SUBCASE("instance_norm2d") {
    std::vector<Var> in{Var(random_tensor({2, 3, 4, 5}, rng), true),
                        Var(random_tensor({3}, rng, 0.5, 1.5), true),
                        Var(random_tensor({3}, rng), true)};
    const double err = gradcheck(
        [](const std::vector<Var>& v) {
          Var y = nn::instance_norm2d(v[0], v[1], v[2]);
          return nn::mean_all(nn::mul(y, y));
        },
        in);
    CHECK(err < 1e-5);
  }
  SUBCASE("resize up and down") {
    std::vector<Var> in{Var(random_tensor({1, 2, 5, 6}, rng), true)};
    for (const auto& [oh, ow] : std::vector<std::pair<int, int>>{{10, 12}, {3, 2}}) {
      const int h = oh, w = ow;
      const double err = gradcheck(
          [h, w](const std::vector<Var>& v) {
            Var y = nn::resize_bilinear2d(v[0], h, w);
            return nn::mean_all(nn::mul(y, y));
          },
          in);
      CHECK(err < 1e-5);
    }
  }
  SUBCASE("reflect_pad2d") {
    std::vector<Var> in{Var(random_tensor({1, 1, 5, 5}, rng), true)};
    const double err = gradcheck(
        [](const std::vector<Var>& v) {
          Var y = nn::reflect_pad2d(v[0], 2);
          return nn::mean_all(nn::mul(y, y));
        },
        in);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("backward accumulates deterministically across runs") {
  std::mt19937_64 rng(8);
  Var x(random_tensor({2, 3, 8, 8}, rng), true);
  Var w(random_tensor({4, 3, 3, 3}, rng), true);
  Var b(Tensor({4}), true);

  auto run = [&] {
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
    Var loss = nn::mean_all(nn::abs_op(nn::conv2d(x, w, b, 1, 1)));
    nn::backward(loss);
    return std::make_pair(x.grad(), w.grad());
  };
  const auto [gx1, gw1] = run();
  const auto [gx2, gw2] = run();
  for (size_t i = 0; i < gx1.size(); ++i) CHECK(gx1[i] == gx2[i]);
  for (size_t i = 0; i < gw1.size(); ++i) CHECK(gw1[i] == gw2[i]);
}

TEST_CASE("adam updates parameters and no-grad mode skips the tape") {
  std::mt19937_64 rng(9);
  Var p(random_tensor({4}, rng), true);
  nn::Adam opt({p}, 0.9, 0.95);
  const Tensor before = p.value();
  opt.zero_grad();
  Var loss = nn::mean_all(nn::mul(p, p));
  nn::backward(loss);
  opt.step(1e-2);
  bool changed = false;
  for (size_t i = 0; i < p.size(); ++i) changed = changed || p.value()[i] != before[i];
  CHECK(changed);

  {
    nn::NoGradGuard guard;
    Var q = nn::mul(p, p);
    CHECK_FALSE(q.requires_grad());
  }
}

TEST_SUITE_END();
