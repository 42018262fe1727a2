#include <doctest.h>

#include <random>
#include <set>

#include "test_util.hpp"
#include "uta/sis.hpp"
#include "uta/tcc.hpp"

using namespace uta;
using nn::Tensor;
using nn::Var;

TEST_SUITE_BEGIN("sis_tcc");

namespace {

Tensor random01(const std::vector<int>& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testutil::random_tensor(shape, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("sis encoder pyramid geometry at the paper input size") {
  SisConfig cfg;  // K = 4, base 32
  SisNet net(cfg, 7);
  nn::NoGradGuard guard;
  const Var frame(Tensor({1, 1, 448, 448}, 0.25));
  const auto pyr = net.encode(frame, SisNet::Branch::kThermal);
  REQUIRE(pyr.size() == 5);
  const int want_sizes[5] = {448, 224, 112, 56, 28};
  for (int k = 0; k <= 4; ++k) {
    CHECK(pyr[k].shape()[2] == want_sizes[k]);
    CHECK(pyr[k].shape()[3] == want_sizes[k]);
    CHECK(pyr[k].shape()[1] == cfg.channels_at(k));
    CHECK(pyr[k].value().all_finite());
  }
}

TEST_CASE("sis contracts at desk scale") {
  SisConfig cfg;
  cfg.levels = 3;
  cfg.base_channels = 8;
  SisNet net(cfg, 11);
  nn::NoGradGuard guard;

  SUBCASE("zero input stays finite") {
    const Var out = net.forward(Var(Tensor({1, 1, 32, 32})), Var(Tensor({1, 1, 32, 32})));
    CHECK(out.value().all_finite());
  }
  SUBCASE("event and thermal encoders differ on shared input") {
    const Var x(random01({1, 1, 32, 32}, 3));
    const auto a = net.encode(x, SisNet::Branch::kEvent);
    const auto b = net.encode(x, SisNet::Branch::kThermal);
    bool any_diff = false;
    for (size_t i = 0; i < a[0].size(); ++i)
      any_diff = any_diff || a[0].value()[i] != b[0].value()[i];
    CHECK(any_diff);
  }
  SUBCASE("output matches input shape, lands in [0,1], several sizes") {
    for (int size : {16, 32, 48}) {
      const Var out = net.forward(Var(random01({2, 1, size, size}, size)),
                                  Var(random01({2, 1, size, size}, size + 1)));
      CHECK(out.shape() == std::vector<int>{2, 1, size, size});
      CHECK(out.value().min_value() >= 0.0);
      CHECK(out.value().max_value() <= 1.0);
      CHECK(out.value().all_finite());
    }
  }
  SUBCASE("indivisible input dims are rejected") {
    CHECK_THROWS_AS(net.forward(Var(Tensor({1, 1, 20, 20})), Var(Tensor({1, 1, 20, 20}))),
                    ShapeError);
  }
  SUBCASE("perturbing only the event input changes the output") {
    Tensor ev = random01({1, 1, 32, 32}, 5);
    const Tensor ir = random01({1, 1, 32, 32}, 6);
    const Var base = net.forward(Var(ev), Var(ir));
    ev[5 * 32 + 7] += 0.25;
    const Var bumped = net.forward(Var(ev), Var(ir));
    double diff = 0;
    for (size_t i = 0; i < base.size(); ++i)
      diff = std::max(diff, std::abs(base.value()[i] - bumped.value()[i]));
    CHECK(diff > 0.0);
  }
  SUBCASE("deterministic in inference mode") {
    const Tensor ev = random01({1, 1, 32, 32}, 8);
    const Tensor ir = random01({1, 1, 32, 32}, 9);
    const Var a = net.forward(Var(ev), Var(ir));
    const Var b = net.forward(Var(ev), Var(ir));
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.value()[i] == b.value()[i]);
  }
}

TEST_CASE("sis encoders have equal parameter counts on disjoint tensors") {
  SisNet net(SisConfig{}, 13);
  size_t ev_count = 0, ir_count = 0;
  std::vector<const double*> ev_ptrs, ir_ptrs;
  for (const auto& [name, var] : net.named_params()) {
    if (name.find("enc_ev") != std::string::npos) {
      ev_count += var.size();
      ev_ptrs.push_back(var.value().data());
    }
    if (name.find("enc_ir") != std::string::npos) {
      ir_count += var.size();
      ir_ptrs.push_back(var.value().data());
    }
  }
  CHECK(ev_count == ir_count);
  CHECK(ev_count > 0);
  for (const double* p : ev_ptrs) CHECK(std::count(ir_ptrs.begin(), ir_ptrs.end(), p) == 0);
}

namespace {

TccConfig tiny_tcc(int n_frames = 3) {
  TccConfig cfg;
  cfg.n_frames = n_frames;
  cfg.embed_dim = 8;
  cfg.heads = {1, 2, 4, 8};
  cfg.patch_size = 4;
  cfg.decode_dim = 8;
  cfg.decode_heads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("deformable alignment contracts") {
  const TccConfig cfg = tiny_tcc(3);
  TccNet net(cfg, 17);
  nn::NoGradGuard guard;
  const int k = cfg.align_kernel;

  SUBCASE("zero offsets reproduce the standard convolution per frame") {
    const Var v(random01({2, 3, 12, 12}, 21));
    const Var zero_off(Tensor({2, 3 * 2 * k * k, 12, 12}));
    const Var aligned = net.deform_features(v, zero_off);
    REQUIRE(aligned.shape() == std::vector<int>{2, 3, cfg.embed_dim, 12, 12});

    nn::NamedParams params = net.named_params();
    Var dw, db;
    for (auto& [name, var] : params) {
      if (name == "tcc.deform.w") dw = var;
      if (name == "tcc.deform.b") db = var;
    }
    const Var frame = nn::slice(v, {{0, 2}, {1, 1}, {0, 12}, {0, 12}});
    const Var want = nn::conv2d(frame, dw, db, 1, k / 2);
    const Var got = nn::slice(aligned, {{0, 2}, {1, 1}, {0, cfg.embed_dim}, {0, 12}, {0, 12}});
    for (size_t i = 0; i < want.size(); ++i)
      CHECK(got.value()[i] == doctest::Approx(want.value()[i]).epsilon(1e-5));
  }
  SUBCASE("integer-shift offsets equal convolution of the shifted frame") {
    const Var v(random01({1, 3, 12, 12}, 22));
    Tensor off({1, 3 * 2 * k * k, 12, 12});
    // dy = +1 for every tap of frame 0.
    for (int tap = 0; tap < k * k; ++tap)
      for (int i = 0; i < 144; ++i) off[static_cast<size_t>(2 * tap) * 144 + i] = 1.0;
    const Var aligned = net.deform_features(v, Var(off));

    nn::NamedParams params = net.named_params();
    Var dw, db;
    for (auto& [name, var] : params) {
      if (name == "tcc.deform.w") dw = var;
      if (name == "tcc.deform.b") db = var;
    }
    // Shift frame 0 up one row (content at y comes from y+1), zero fill.
    Tensor shifted({1, 1, 12, 12});
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 12; ++x)
        shifted[static_cast<size_t>(y) * 12 + x] = v.value()[static_cast<size_t>(y + 1) * 12 + x];
    const Var want = nn::conv2d(Var(shifted), dw, db, 1, k / 2);
    const Var got = nn::slice(aligned, {{0, 1}, {0, 1}, {0, cfg.embed_dim}, {0, 12}, {0, 12}});
    // Output row 0 is excluded: the shifted-input oracle zero-pads above the
    // frame where the deformable sampler still sees real content.
    for (int c = 0; c < cfg.embed_dim; ++c)
      for (int y = 1; y < 12; ++y)
        for (int x = 0; x < 12; ++x) {
          const size_t idx = (static_cast<size_t>(c) * 12 + y) * 12 + x;
          CHECK(got.value()[idx] == doctest::Approx(want.value()[idx]).epsilon(1e-5));
        }
  }
  SUBCASE("constant volume gives spatially constant interior features") {
    const Var v(Tensor({1, 3, 16, 16}, 0.6));
    const Var aligned = net.deform_align(v);
    for (int n = 0; n < 3; ++n)
      for (int c = 0; c < cfg.embed_dim; c += 3) {
        const size_t base = ((static_cast<size_t>(n) * cfg.embed_dim) + c) * 256;
        const double ref = aligned.value()[base + 5 * 16 + 5];
        for (int y = 3; y < 13; ++y)
          for (int x = 3; x < 13; ++x)
            CHECK(aligned.value()[base + y * 16 + x] == doctest::Approx(ref).epsilon(1e-9));
      }
  }
}

TEST_CASE("window attention mechanics") {
  nn::NoGradGuard guard;

  SUBCASE("softmax rows sum to one per head") {
    std::mt19937_64 rng(31);
    nn::LinearLayer qkv(8, 24, rng), proj(8, 8, rng);
    const Var x(random01({1, 4, 7, 7, 8}, 32));
    Tensor probs;
    nn_detail::window_mhsa(x, qkv, proj, 2, {2, 7, 7}, {0, 0, 0}, &probs);
    REQUIRE(probs.ndim() == 3);
    const int L = probs.dim(1);
    for (int b = 0; b < probs.dim(0); ++b)
      for (int i = 0; i < L; ++i) {
        double s = 0;
        for (int j = 0; j < L; ++j) s += probs[(static_cast<size_t>(b) * L + i) * L + j];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
      }
  }
  SUBCASE("singleton windows make attention the identity up to projections") {
    nn::LinearLayer qkv, proj;
    qkv.w = Var(Tensor({4, 12}), true);
    qkv.b = Var(Tensor({12}), true);
    for (int i = 0; i < 4; ++i) qkv.w.mutable_value()[i * 12 + 8 + i] = 1.0;  // V block = I
    proj.w = Var(Tensor({4, 4}), true);
    proj.b = Var(Tensor({4}), true);
    for (int i = 0; i < 4; ++i) proj.w.mutable_value()[i * 4 + i] = 1.0;
    const Var x(random01({1, 3, 5, 6, 4}, 33));
    const Var out = nn_detail::window_mhsa(x, qkv, proj, 1, {1, 1, 1}, {0, 0, 0});
    REQUIRE(out.shape() == x.shape());
    for (size_t i = 0; i < x.size(); ++i)
      CHECK(out.value()[i] == doctest::Approx(x.value()[i]).epsilon(1e-12));
  }
  SUBCASE("uniform features attend to a uniform average") {
    std::mt19937_64 rng(34);
    nn::LinearLayer qkv(6, 18, rng), proj(6, 6, rng);
    Tensor x({1, 2, 7, 7, 6});
    for (int p = 0; p < 2 * 7 * 7; ++p)
      for (int c = 0; c < 6; ++c) x[static_cast<size_t>(p) * 6 + c] = 0.1 * c - 0.2;
    const Var out = nn_detail::window_mhsa(Var(x), qkv, proj, 2, {2, 7, 7}, {0, 0, 0});
    for (int c = 0; c < 6; ++c) {
      const double ref = out.value()[c];
      for (int p = 1; p < 2 * 7 * 7; ++p)
        CHECK(out.value()[static_cast<size_t>(p) * 6 + c] == doctest::Approx(ref).epsilon(1e-9));
    }
  }
}

TEST_CASE("swin stages") {
  SUBCASE("stage 1 halves space and doubles channels at paper scale") {
    TccConfig cfg;  // embed 48, heads (3,6,12,24)
    TccNet net(cfg, 41);
    nn::NoGradGuard guard;
    const Var f(random01({1, 7, 56, 56, 48}, 42));
    const Var out = net.swin_stage(f, 1);
    CHECK(out.shape() == std::vector<int>{1, 7, 28, 28, 96});
    CHECK(out.value().all_finite());
  }
  SUBCASE("stage 3 executes exactly six attention blocks") {
    const TccConfig cfg = tiny_tcc(3);
    TccNet net(cfg, 43);
    nn::NoGradGuard guard;
    const Var v(random01({1, 3, 16, 16}, 44));
    net.forward(v);
    CHECK(net.blocks_executed()[0] == 2);
    CHECK(net.blocks_executed()[1] == 2);
    CHECK(net.blocks_executed()[2] == 6);
    CHECK(net.blocks_executed()[3] == 2);
  }
  SUBCASE("all-zero features with default zero biases stay zero") {
    const TccConfig cfg = tiny_tcc(3);
    TccNet net(cfg, 45);
    nn::NoGradGuard guard;
    const Var f(Tensor({1, 3, 8, 8, cfg.embed_dim}));
    const Var out = net.swin_stage(f, 1);
    CHECK(out.value().min_value() == 0.0);
    CHECK(out.value().max_value() == 0.0);
  }
}

TEST_CASE("tcc decode and forward contracts") {
  const TccConfig cfg = tiny_tcc(3);
  TccNet net(cfg, 51);
  nn::NoGradGuard guard;

  SUBCASE("output resolution equals the volume resolution, in [0,1]") {
    const Var v(random01({2, 3, 16, 16}, 52));
    const Var out = net.forward(v);
    CHECK(out.shape() == std::vector<int>{2, 1, 16, 16});
    CHECK(out.value().min_value() >= 0.0);
    CHECK(out.value().max_value() <= 1.0);
    CHECK(out.value().all_finite());
  }
  SUBCASE("all-zero and all-one volumes stay finite and bounded") {
    for (double fill : {0.0, 1.0}) {
      const Var out = net.forward(Var(Tensor({1, 3, 16, 16}, fill)));
      CHECK(out.value().all_finite());
      CHECK(out.value().min_value() >= 0.0);
      CHECK(out.value().max_value() <= 1.0);
    }
  }
  SUBCASE("perturbing an early frame reaches the output") {
    Tensor v = random01({1, 3, 16, 16}, 53);
    const Var base = net.forward(Var(v));
    v[3 * 16 + 4] = std::min(1.0, v[3 * 16 + 4] + 0.5);  // frame 0
    const Var bumped = net.forward(Var(v));
    double diff = 0;
    for (size_t i = 0; i < base.size(); ++i)
      diff = std::max(diff, std::abs(base.value()[i] - bumped.value()[i]));
    CHECK(diff > 0.0);
  }
  SUBCASE("degenerate single-frame volume runs") {
    TccNet net1(tiny_tcc(1), 54);
    const Var out = net1.forward(Var(random01({1, 1, 16, 16}, 55)));
    CHECK(out.shape() == std::vector<int>{1, 1, 16, 16});
    CHECK(out.value().all_finite());
  }
  SUBCASE("static volumes give bit-identical outputs across runs") {
    const Tensor v = random01({1, 3, 16, 16}, 56);
    const Var a = net.forward(Var(v));
    const Var b = net.forward(Var(v));
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.value()[i] == b.value()[i]);
  }
}

TEST_CASE("tcc parameter names are unique") {
  const TccConfig cfg = tiny_tcc(3);
  TccNet net(cfg, 61);
  const auto params = net.named_params();
  CHECK(params.size() > 10);
  std::set<std::string> names;
  for (const auto& [name, var] : params) names.insert(name);
  CHECK(names.size() == params.size());
}

TEST_SUITE_END();
