#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "flow.hpp"

using namespace ccap;

namespace {

Tensor random_t(Shape shape, uint64_t seed, bool grad = false, double lo = -1.0,
                double hi = 1.0) {
  Rng rng(seed);
  Tensor t = Tensor::zeros(std::move(shape), grad);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor probe(const Tensor& t, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(t.size());
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return matmul(reshape(t, {1, t.size()}), Tensor::from_values({t.size(), 1}, std::move(w)));
}

bool all_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

// Independent per-cell interpolation oracle: clamp the sample point, gather
// the four neighbors with explicit integer arithmetic, and blend.
std::vector<double> warp_oracle(const std::vector<double>& grid,
                                const std::vector<double>& flow, size_t d, size_t h,
                                size_t w) {
  std::vector<double> out(d * h * w, 0.0);
  for (size_t c = 0; c < d; ++c) {
    for (size_t m = 0; m < h; ++m) {
      for (size_t n = 0; n < w; ++n) {
        double sx = static_cast<double>(n) + flow[m * w + n];
        double sy = static_cast<double>(m) + flow[h * w + m * w + n];
        sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
        sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
        const long x0 = static_cast<long>(std::floor(sx));
        const long y0 = static_cast<long>(std::floor(sy));
        double acc = 0.0;
        for (long dy = 0; dy <= 1; ++dy) {
          for (long dx = 0; dx <= 1; ++dx) {
            const long xx = std::min<long>(x0 + dx, static_cast<long>(w) - 1);
            const long yy = std::min<long>(y0 + dy, static_cast<long>(h) - 1);
            const double wx = dx == 0 ? 1.0 - (sx - static_cast<double>(x0))
                                      : sx - static_cast<double>(x0);
            const double wy = dy == 0 ? 1.0 - (sy - static_cast<double>(y0))
                                      : sy - static_cast<double>(y0);
            acc += wx * wy *
                   grid[c * h * w + static_cast<size_t>(yy) * w + static_cast<size_t>(xx)];
          }
        }
        out[c * h * w + m * w + n] = acc;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("sequence_to_grid: shapes, row-major layout, exact round trip") {
  Tensor seq = random_t({65, 64}, 1);
  GridAndCls g = ViewpointFlow::sequence_to_grid(seq, 8, 8);
  CHECK(g.grid.shape() == Shape{64, 8, 8});
  CHECK(g.cls.shape() == Shape{1, 64});

  // Token 1 lands at (0,0); token 9 at (1,0) on the 8x8 grid.
  for (size_t c = 0; c < 64; ++c) {
    CHECK(g.grid[c * 64 + 0 * 8 + 0] == seq[1 * 64 + c]);
    CHECK(g.grid[c * 64 + 1 * 8 + 0] == seq[9 * 64 + c]);
  }

  Tensor back = ViewpointFlow::grid_to_sequence(g);
  CHECK(all_equal(back, seq));

  CHECK_THROWS_AS(ViewpointFlow::sequence_to_grid(random_t({64, 64}, 2), 8, 8),
                  std::invalid_argument);
}

TEST_CASE("predict_flow: zero-init 3x3 conv yields all-zero fields") {
  FlowConfig cfg;
  cfg.width = 16;
  cfg.grid_h = 4;
  cfg.grid_w = 4;
  cfg.reduced = 4;
  ParamStore store;
  Rng rng(3);
  ViewpointFlow flow(store, cfg, rng);
  auto [f1, f2] = flow.predict_flow(random_t({16, 4, 4}, 4), random_t({16, 4, 4}, 5));
  for (size_t i = 0; i < f1.size(); ++i) CHECK(f1[i] == 0.0);
  for (size_t i = 0; i < f2.size(); ++i) CHECK(f2[i] == 0.0);

  CHECK_THROWS_AS(flow.predict_flow(random_t({16, 4, 4}, 6), random_t({16, 2, 2}, 7)),
                  std::invalid_argument);
}

TEST_CASE("predict_flow symmetry: identical branches on identical inputs") {
  FlowConfig cfg;
  cfg.width = 16;
  cfg.grid_h = 4;
  cfg.grid_w = 4;
  cfg.reduced = 4;
  ParamStore store;
  Rng rng(11);
  ViewpointFlow flow(store, cfg, rng);
  // Mirror the two reduction branches and the two output-field kernels.
  Tensor a = store.get("flow.reduce1.w");
  Tensor b = store.get("flow.reduce2.w");
  b.values() = a.values();
  Tensor k = store.get("flow.predict.w");
  Rng r(13);
  for (double& v : k.values()) v = r.uniform(-0.4, 0.4);
  const size_t per_field = k.size() / 2;
  for (size_t i = 0; i < per_field; ++i) k.values()[per_field + i] = k.values()[i];

  Tensor g = random_t({16, 4, 4}, 17);
  auto [f1, f2] = flow.predict_flow(g, g);
  CHECK(all_equal(f1, f2));
}

TEST_CASE("predict_flow gradient vs finite differences") {
  FlowConfig cfg;
  cfg.width = 8;
  cfg.grid_h = 3;
  cfg.grid_w = 3;
  cfg.reduced = 2;
  ParamStore store;
  Rng rng(19);
  ViewpointFlow flow(store, cfg, rng);
  Tensor k = store.get("flow.predict.w");
  Rng r(23);
  for (double& v : k.values()) v = r.uniform(-0.3, 0.3);
  store.set_trainable_prefixes({"flow."});
  Tensor g1 = random_t({8, 3, 3}, 29);
  Tensor g2 = random_t({8, 3, 3}, 31);
  auto report = gradient_check(
      [&]() {
        auto [f1, f2] = flow.predict_flow(g1, g2);
        return probe(concat(f1, f2, 0), 37);
      },
      store.trainable());
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("bilinear_warp: identity at zero flow, exact bit equality") {
  Tensor grid = random_t({5, 6, 7}, 41);
  Tensor zero_flow = Tensor::zeros({2, 6, 7});
  Tensor out = bilinear_warp(grid, zero_flow);
  CHECK(all_equal(out, grid));
}

TEST_CASE("bilinear_warp: constant +1 horizontal flow shifts columns, clamps border") {
  // 1-channel 4x4 ramp.
  std::vector<double> ramp(16);
  for (size_t i = 0; i < 16; ++i) ramp[i] = static_cast<double>(i);
  Tensor grid = Tensor::from_values({1, 4, 4}, ramp);
  std::vector<double> fv(2 * 16, 0.0);
  for (size_t i = 0; i < 16; ++i) fv[i] = 1.0;  // horizontal channel
  Tensor flow = Tensor::from_values({2, 4, 4}, fv);
  Tensor out = bilinear_warp(grid, flow);
  for (size_t m = 0; m < 4; ++m) {
    for (size_t n = 0; n < 4; ++n) {
      const size_t src_col = std::min<size_t>(n + 1, 3);
      CHECK(out[m * 4 + n] == doctest::Approx(ramp[m * 4 + src_col]).epsilon(1e-12));
    }
  }
}

TEST_CASE("bilinear_warp: integer flows equal index shifts (oracle)") {
  for (uint64_t seed = 50; seed < 56; ++seed) {
    Tensor grid = random_t({3, 5, 5}, seed);
    Rng rng(seed * 13);
    std::vector<double> fv(2 * 25);
    for (double& v : fv) v = static_cast<double>(static_cast<long>(rng.below(5)) - 2);
    Tensor flow = Tensor::from_values({2, 5, 5}, fv);
    Tensor out = bilinear_warp(grid, flow);
    auto oracle = warp_oracle(grid.values(), flow.values(), 3, 5, 5);
    for (size_t i = 0; i < out.size(); ++i) {
      CHECK(std::fabs(out[i] - oracle[i]) < 1e-12);
    }
  }
}

TEST_CASE("bilinear_warp: random fractional flows match the brute-force oracle") {
  for (uint64_t seed = 60; seed < 80; ++seed) {
    Tensor grid = random_t({4, 6, 5}, seed, false, -3.0, 3.0);
    Tensor flow = random_t({2, 6, 5}, seed * 7 + 1, false, -2.5, 2.5);
    Tensor out = bilinear_warp(grid, flow);
    auto oracle = warp_oracle(grid.values(), flow.values(), 4, 6, 5);
    for (size_t i = 0; i < out.size(); ++i) {
      CHECK(std::fabs(out[i] - oracle[i]) < 1e-12);
    }
  }
}

TEST_CASE("partition of unity: constant grids stay constant under any flow") {
  for (uint64_t seed = 90; seed < 110; ++seed) {
    Tensor grid = Tensor::full({2, 5, 5}, 2.625);
    Tensor flow = random_t({2, 5, 5}, seed, false, -4.0, 4.0);
    Tensor out = bilinear_warp(grid, flow);
    for (size_t i = 0; i < out.size(); ++i) {
      CHECK(std::fabs(out[i] - 2.625) < 1e-12);
    }
  }
}

TEST_CASE("warp differentiability away from the lattice") {
  Tensor grid = random_t({2, 5, 5}, 121, true);
  Tensor flow = Tensor::zeros({2, 5, 5}, true);
  Rng rng(123);
  for (double& v : flow.values()) {
    double f = rng.uniform(-1.4, 1.4);
    if (std::fabs(f - std::round(f)) < 0.05) f += 0.101;
    v = f;
  }
  auto report =
      gradient_check([&]() { return probe(bilinear_warp(grid, flow), 11); }, {grid, flow});
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("register_and_fuse: zero flow sums features, class tokens pass through") {
  FlowConfig cfg;
  cfg.width = 12;
  cfg.grid_h = 3;
  cfg.grid_w = 3;
  cfg.reduced = 3;
  ParamStore store;
  Rng rng(131);
  ViewpointFlow flow(store, cfg, rng);

  Tensor x1 = random_t({10, 12}, 133);
  Tensor x2 = random_t({10, 12}, 134);
  auto [h1, h2] = flow.register_and_fuse(x1, x2);
  CHECK(h1.shape() == Shape{10, 12});

  // Patch tokens: x1 + x2 on both outputs; class token untouched per stream.
  for (size_t j = 0; j < 12; ++j) {
    CHECK(h1[j] == x1[j]);
    CHECK(h2[j] == x2[j]);
  }
  for (size_t t = 1; t < 10; ++t) {
    for (size_t j = 0; j < 12; ++j) {
      CHECK(h1[t * 12 + j] == doctest::Approx(x1[t * 12 + j] + x2[t * 12 + j]).epsilon(1e-15));
      CHECK(h1[t * 12 + j] == h2[t * 12 + j]);
    }
  }

  // Swap the inputs at zero-init: outputs swap.
  auto [s1, s2] = flow.register_and_fuse(x2, x1);
  for (size_t j = 0; j < 12; ++j) CHECK(s1[j] == x2[j]);
  for (size_t t = 1; t < 10; ++t) {
    for (size_t j = 0; j < 12; ++j) CHECK(s1[t * 12 + j] == h2[t * 12 + j]);
  }
}

TEST_CASE("fusion ablation switches: subtract and concat") {
  FlowConfig cfg;
  cfg.width = 8;
  cfg.grid_h = 2;
  cfg.grid_w = 2;
  cfg.reduced = 2;

  Tensor x1 = random_t({5, 8}, 141);
  Tensor x2 = random_t({5, 8}, 142);

  cfg.fusion = FusionMode::Subtract;
  {
    ParamStore store;
    Rng rng(143);
    ViewpointFlow flow(store, cfg, rng);
    auto [h1, h2] = flow.register_and_fuse(x1, x2);
    for (size_t t = 1; t < 5; ++t) {
      for (size_t j = 0; j < 8; ++j) {
        CHECK(h1[t * 8 + j] ==
              doctest::Approx(x1[t * 8 + j] - x2[t * 8 + j]).epsilon(1e-15));
      }
    }
  }

  cfg.fusion = FusionMode::Concat;
  {
    ParamStore store;
    Rng rng(144);
    ViewpointFlow flow(store, cfg, rng);
    CHECK(store.has("flow.concat_proj.w"));
    auto [h1, h2] = flow.register_and_fuse(x1, x2);
    CHECK(h1.shape() == Shape{5, 8});  // projection keeps the width
  }
}

TEST_CASE("flow_to_rgb: zero flow renders uniform mid-gray") {
  Tensor flow = Tensor::zeros({2, 4, 4});
  auto rgb = flow_to_rgb(flow);
  for (size_t i = 0; i < rgb.size(); ++i) CHECK(rgb[i] == 0.5);

  // Direction maps to hue: opposite flows get different colors.
  Tensor east = Tensor::zeros({2, 1, 1});
  east.values()[0] = 1.0;
  Tensor west = Tensor::zeros({2, 1, 1});
  west.values()[0] = -1.0;
  CHECK(flow_to_rgb(east) != flow_to_rgb(west));
}
