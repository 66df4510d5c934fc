#include <doctest.h>

#include <cmath>
#include <vector>

#include "delaynet/grad_check.hpp"
#include "delaynet/ops.hpp"
#include "delaynet/tensor.hpp"

using namespace delaynet;

namespace {

// Brute-force sliding dot product with explicit zero padding, written
// independently of the library loops.
std::vector<double> conv_dw_oracle(const std::vector<double>& x,
                                   const std::vector<double>& k,
                                   std::int64_t bsz, std::int64_t ch,
                                   std::int64_t s, std::int64_t kk,
                                   std::int64_t pad_left) {
  std::vector<double> out(static_cast<std::size_t>(bsz * ch * s), 0.0);
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t c = 0; c < ch; ++c)
      for (std::int64_t t = 0; t < s; ++t) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < kk; ++j) {
          const std::int64_t u = t + j - pad_left;
          if (u >= 0 && u < s) acc += k[c * kk + j] * x[(b * ch + c) * s + u];
        }
        out[(b * ch + c) * s + t] = acc;
      }
  return out;
}

Tensor safe_coords(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t = Tensor::zeros(shape, true);
  for (auto& v : t.values()) {
    v = rng.uniform(lo, hi);
    const double frac = v - std::floor(v);
    if (frac < 1e-3) v += 2e-3;
    if (frac > 1.0 - 1e-3) v -= 2e-3;
  }
  return t;
}

}  // namespace

TEST_CASE("tensor construction and validation") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.numel() == 6);
  CHECK(z.rank() == 2);
  CHECK(z.values() == std::vector<double>(6, 0.0));

  Tensor f = Tensor::full({2}, 1.5);
  CHECK(f.values()[0] == 1.5);
  CHECK(f.values()[1] == 1.5);

  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), config_error);
  CHECK_THROWS_AS(Tensor::zeros({2, 2}).item(), config_error);
  CHECK(Tensor::scalar(4.25).item() == 4.25);
}

TEST_CASE("backward: square rule and constants") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor loss = mul(x, x);
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));

  Tensor c = Tensor::scalar(7.0);  // constant: no grad path
  Tensor y = Tensor::scalar(2.0, true);
  y.zero_grad();
  Tensor loss2 = add(mul(c, c), Tensor::scalar(1.0));
  loss2.backward();
  CHECK(y.grad() == std::vector<double>{0.0});
}

TEST_CASE("backward: accumulation through shared nodes") {
  Tensor x = Tensor::scalar(1.5, true);
  Tensor y = add(x, x);        // dy/dx = 2
  Tensor loss = mul(y, y);     // d/dx (2x)^2 = 8x = 12
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("backward guards") {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor loss = mul(x, x);
  loss.backward();
  CHECK_THROWS_AS(loss.backward(), state_error);

  Tensor vec = Tensor::zeros({3}, true);
  Tensor out = add(vec, Tensor::scalar(1.0));
  CHECK_THROWS_AS(out.backward(), config_error);
}

TEST_CASE("graph reuse: stale graphs do not disturb gradients") {
  Rng rng(11);
  Tensor x = Tensor::randn({4}, rng, 0.0, 1.0, true);

  Tensor discarded = mean_all(mul(x, x));  // built, never differentiated
  Tensor loss = mean_all(mul(x, x));
  loss.backward();
  std::vector<double> got = x.grad();

  Tensor x2 = Tensor::from_data({4}, x.values(), true);
  Tensor loss2 = mean_all(mul(x2, x2));
  loss2.backward();
  CHECK(got == x2.grad());
}

TEST_CASE("elementwise forward values") {
  Tensor x = Tensor::from_data({4}, {-2.0, -0.5, 0.0, 1.5});
  Tensor lr = leaky_relu(x);
  CHECK(lr.values()[0] == doctest::Approx(-0.02));
  CHECK(lr.values()[1] == doctest::Approx(-0.005));
  CHECK(lr.values()[2] == 0.0);
  CHECK(lr.values()[3] == 1.5);

  CHECK(abs(x).values()[0] == 2.0);
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5));
  CHECK(exp(Tensor::scalar(1.0)).item() == doctest::Approx(std::exp(1.0)));

  Tensor a = Tensor::from_data({3}, {1.0, 5.0, -2.0});
  Tensor b = Tensor::from_data({3}, {4.0, 2.0, -2.0});
  CHECK(minimum(a, b).values() == std::vector<double>{1.0, 2.0, -2.0});
  CHECK(maximum(a, b).values() == std::vector<double>{4.0, 5.0, -2.0});
}

TEST_CASE("leaky_relu subgradient at zero is 0.01") {
  Tensor x = Tensor::scalar(0.0, true);
  Tensor loss = leaky_relu(x);
  loss.backward();
  CHECK(x.grad()[0] == 0.01);
}

TEST_CASE("abs subgradient at zero is 0") {
  Tensor x = Tensor::scalar(0.0, true);
  Tensor loss = abs(x);
  loss.backward();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("min/max ties route gradient to the first operand") {
  Tensor a = Tensor::scalar(2.0, true);
  Tensor b = Tensor::scalar(2.0, true);
  Tensor loss = minimum(a, b);
  loss.backward();
  CHECK(a.grad()[0] == 1.0);
  CHECK(b.grad()[0] == 0.0);
}

TEST_CASE("scalar broadcast and shape mismatch") {
  Tensor a = Tensor::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor s = Tensor::scalar(10.0);
  CHECK(mul(a, s).values() == std::vector<double>{10.0, 20.0, 30.0, 40.0});
  CHECK(sub(s, a).values() == std::vector<double>{9.0, 8.0, 7.0, 6.0});
  CHECK(mul(a, s).shape() == Shape{2, 2});
  CHECK(sub(s, a).shape() == Shape{2, 2});

  Tensor bad = Tensor::zeros({3});
  CHECK_THROWS_AS(add(a, bad), config_error);
}

TEST_CASE("scalar broadcast gradient sums over the array side") {
  Tensor a = Tensor::from_data({3}, {1.0, 2.0, 3.0});
  Tensor s = Tensor::scalar(2.0, true);
  Tensor loss = mean_all(mul(a, s));
  loss.backward();
  CHECK(s.grad()[0] == doctest::Approx(2.0));  // mean of a
}

TEST_CASE("NaN in an elementwise result raises numeric_error") {
  Tensor x = Tensor::from_data({2}, {-1.0, 4.0});
  CHECK_THROWS_AS(sqrt(x), numeric_error);
  Tensor z = Tensor::from_data({1}, {0.0});
  CHECK_THROWS_AS(div(z, z), numeric_error);  // 0/0
}

TEST_CASE("matmul against triple loop") {
  Rng rng(3);
  const std::int64_t m = 4, k = 5, n = 3;
  Tensor a = Tensor::randn({m, k}, rng);
  Tensor b = Tensor::randn({k, n}, rng);
  Tensor c = matmul(a, b);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p)
        acc += a.values()[i * k + p] * b.values()[p * n + j];
      CHECK(c.values()[i * n + j] == doctest::Approx(acc).epsilon(1e-12));
    }
  CHECK_THROWS_AS(matmul(a, Tensor::zeros({k + 1, n})), config_error);
}

TEST_CASE("conv1d_depthwise: delta kernels") {
  Rng rng(5);
  Tensor x = Tensor::randn({2, 1, 6}, rng);

  // centered delta reproduces the input
  Tensor ident = conv1d_depthwise(
      x, Tensor::from_data({1, 3}, {0.0, 1.0, 0.0}), Padding::same_zero);
  CHECK(ident.values() == x.values());

  // mass on the left tap delays by one step
  Tensor delayed = conv1d_depthwise(
      x, Tensor::from_data({1, 3}, {1.0, 0.0, 0.0}), Padding::same_zero);
  for (std::int64_t b = 0; b < 2; ++b) {
    CHECK(delayed.values()[b * 6] == 0.0);
    for (std::int64_t t = 1; t < 6; ++t)
      CHECK(delayed.values()[b * 6 + t] == x.values()[b * 6 + t - 1]);
  }
}

TEST_CASE("conv1d_depthwise matches brute-force sliding dot") {
  Rng rng(7);
  const std::int64_t bsz = 2, ch = 3, s = 12, kk = 5;
  Tensor x = Tensor::randn({bsz, ch, s}, rng);
  Tensor k = Tensor::randn({ch, kk}, rng);
  for (Padding pad : {Padding::same_zero, Padding::causal_left}) {
    const std::int64_t pad_left = pad == Padding::same_zero ? (kk - 1) / 2 : kk - 1;
    Tensor out = conv1d_depthwise(x, k, pad);
    auto want = conv_dw_oracle(x.values(), k.values(), bsz, ch, s, kk, pad_left);
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(std::abs(out.values()[i] - want[i]) < 1e-12);
  }

  // even kernel: same_zero splits padding with the extra tap on the right
  Tensor k4 = Tensor::randn({ch, 4}, rng);
  Tensor out4 = conv1d_depthwise(x, k4, Padding::same_zero);
  auto want4 = conv_dw_oracle(x.values(), k4.values(), bsz, ch, s, 4, 1);
  for (std::size_t i = 0; i < want4.size(); ++i)
    CHECK(std::abs(out4.values()[i] - want4[i]) < 1e-12);

  CHECK_THROWS_AS(
      conv1d_depthwise(x, Tensor::zeros({ch, 2 * s + 1}), Padding::same_zero),
      config_error);
}

TEST_CASE("conv1d_depthwise grads match finite differences below 1e-6") {
  Rng rng(9);
  Tensor x = Tensor::randn({2, 2, 8}, rng, 0.0, 1.0, true);
  Tensor k = Tensor::randn({2, 3}, rng, 0.0, 1.0, true);
  auto f = [&]() { return mean_all(conv1d_depthwise(x, k, Padding::same_zero)); };
  CHECK(grad_check(f, {x, k}, 1e-5) < 1e-6);
}

TEST_CASE("causal padding: exact causality") {
  Rng rng(13);
  const std::int64_t s = 10;
  Tensor k = Tensor::randn({1, 4}, rng);
  Tensor x = Tensor::randn({1, 1, s}, rng);
  Tensor base = conv1d_depthwise(x, k, Padding::causal_left);
  for (std::int64_t u = 0; u < s; ++u) {
    Tensor xp = Tensor::from_data({1, 1, s}, x.values());
    xp.values()[u] += 5.0;
    Tensor pert = conv1d_depthwise(xp, k, Padding::causal_left);
    for (std::int64_t t = 0; t < u; ++t)
      CHECK(pert.values()[t] == base.values()[t]);  // bit-exact
  }
}

TEST_CASE("conv1d_causal: full-channel causal convolution") {
  Rng rng(17);
  const std::int64_t bsz = 2, cin = 3, cout = 2, s = 9, kk = 4;
  Tensor x = Tensor::randn({bsz, cin, s}, rng);
  Tensor w = Tensor::randn({cout, cin, kk}, rng);
  Tensor out = conv1d_causal(x, w);
  REQUIRE(out.shape() == Shape{bsz, cout, s});
  // oracle: out[b,o,t] = sum_{i,j} w[o,i,j] * x[b,i,t-(K-1)+j]
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t o = 0; o < cout; ++o)
      for (std::int64_t t = 0; t < s; ++t) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < cin; ++i)
          for (std::int64_t j = 0; j < kk; ++j) {
            const std::int64_t u = t - (kk - 1) + j;
            if (u >= 0 && u < s)
              acc += w.values()[(o * cin + i) * kk + j] *
                     x.values()[(b * cin + i) * s + u];
          }
        CHECK(std::abs(out.values()[(b * cout + o) * s + t] - acc) < 1e-12);
      }

  // K=1 acts as a per-timestep linear map
  Tensor w1 = Tensor::randn({cout, cin, 1}, rng);
  Tensor out1 = conv1d_causal(x, w1);
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t o = 0; o < cout; ++o)
      for (std::int64_t t = 0; t < s; ++t) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < cin; ++i)
          acc += w1.values()[o * cin + i] * x.values()[(b * cin + i) * s + t];
        CHECK(std::abs(out1.values()[(b * cout + o) * s + t] - acc) < 1e-12);
      }

  Tensor xg = Tensor::randn({1, 2, 6}, rng, 0.0, 1.0, true);
  Tensor wg = Tensor::randn({2, 2, 3}, rng, 0.0, 1.0, true);
  auto f = [&]() { return mean_all(conv1d_causal(xg, wg)); };
  CHECK(grad_check(f, {xg, wg}, 1e-5) < 1e-6);
}

TEST_CASE("linear_ct applies the same affine map at every time step") {
  Rng rng(19);
  const std::int64_t bsz = 2, cin = 3, cout = 4, len = 5;
  Tensor x = Tensor::randn({bsz, cin, len}, rng);
  Tensor w = Tensor::randn({cout, cin}, rng);
  Tensor b = Tensor::randn({cout}, rng);
  Tensor y = linear_ct(x, w, b);
  for (std::int64_t bb = 0; bb < bsz; ++bb)
    for (std::int64_t o = 0; o < cout; ++o)
      for (std::int64_t t = 0; t < len; ++t) {
        double acc = b.values()[o];
        for (std::int64_t i = 0; i < cin; ++i)
          acc += w.values()[o * cin + i] * x.values()[(bb * cin + i) * len + t];
        CHECK(std::abs(y.values()[(bb * cout + o) * len + t] - acc) < 1e-12);
      }

  Tensor xg = Tensor::randn({2, 2, 4}, rng, 0.0, 1.0, true);
  Tensor wg = Tensor::randn({3, 2}, rng, 0.0, 1.0, true);
  Tensor bg = Tensor::randn({3}, rng, 0.0, 1.0, true);
  auto f = [&]() { return mean_all(leaky_relu(linear_ct(xg, wg, bg))); };
  CHECK(grad_check(f, {xg, wg, bg}, 1e-5) < 1e-4);
}

TEST_CASE("structural ops: concat, repeat, crop, stack, expand") {
  Tensor a = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({1, 1, 2}, {5, 6});
  Tensor cat = concat_channels(a, b);
  CHECK(cat.shape() == Shape{1, 3, 2});
  CHECK(cat.values() == std::vector<double>{1, 2, 3, 4, 5, 6});

  Tensor rep = repeat_channels(b, 3);
  CHECK(rep.shape() == Shape{1, 3, 2});
  CHECK(rep.values() == std::vector<double>{5, 6, 5, 6, 5, 6});

  Tensor crop = crop_time(a, 1);
  CHECK(crop.shape() == Shape{1, 2, 1});
  CHECK(crop.values() == std::vector<double>{2, 4});
  CHECK_THROWS_AS(crop_time(a, 3), config_error);

  Tensor r0 = Tensor::from_data({2}, {1, 2});
  Tensor r1 = Tensor::from_data({2}, {3, 4});
  Tensor st = stack_rows({r0, r1});
  CHECK(st.shape() == Shape{2, 2});
  CHECK(st.values() == std::vector<double>{1, 2, 3, 4});
  CHECK_THROWS_AS(stack_rows({r0, Tensor::zeros({3})}), config_error);

  Tensor ex = expand_last(Tensor::from_data({2}, {7, 8}), 3);
  CHECK(ex.shape() == Shape{2, 3});
  CHECK(ex.values() == std::vector<double>{7, 7, 7, 8, 8, 8});
}

TEST_CASE("structural op gradients") {
  Rng rng(23);
  Tensor a = Tensor::randn({2, 2, 3}, rng, 0.0, 1.0, true);
  Tensor b = Tensor::randn({2, 1, 3}, rng, 0.0, 1.0, true);
  auto f1 = [&]() {
    Tensor cat = concat_channels(a, b);
    return mean_all(mul(cat, cat));
  };
  CHECK(grad_check(f1, {a, b}, 1e-5) < 1e-6);

  Tensor c = Tensor::randn({1, 2, 5}, rng, 0.0, 1.0, true);
  auto f2 = [&]() {
    Tensor y = crop_time(repeat_channels(c, 2), 3);
    return mean_all(mul(y, y));
  };
  CHECK(grad_check(f2, {c}, 1e-5) < 1e-6);

  Tensor r0 = Tensor::randn({4}, rng, 0.0, 1.0, true);
  Tensor r1 = Tensor::randn({4}, rng, 0.0, 1.0, true);
  auto f3 = [&]() {
    Tensor st = stack_rows({r0, r1, r0});  // reuse of r0 accumulates
    return mean_all(mul(st, st));
  };
  CHECK(grad_check(f3, {r0, r1}, 1e-5) < 1e-6);

  Tensor e = Tensor::randn({3}, rng, 0.0, 1.0, true);
  auto f4 = [&]() {
    Tensor y = expand_last(e, 4);
    return mean_all(mul(y, y));
  };
  CHECK(grad_check(f4, {e}, 1e-5) < 1e-6);
}

TEST_CASE("warp_time: linear interpolation with zero outside") {
  Tensor x = Tensor::from_data({1, 1, 4}, {10.0, 20.0, 30.0, 40.0});
  Tensor coords = Tensor::from_data({1, 5}, {0.0, 0.5, 2.25, 3.0, 3.5});
  Tensor y = warp_time(x, coords);
  CHECK(y.values()[0] == doctest::Approx(10.0));
  CHECK(y.values()[1] == doctest::Approx(15.0));
  CHECK(y.values()[2] == doctest::Approx(32.5));
  CHECK(y.values()[3] == doctest::Approx(40.0));
  CHECK(y.values()[4] == 0.0);  // beyond the grid

  Tensor neg_coords = Tensor::from_data({1, 1}, {-0.25});
  CHECK(warp_time(x, neg_coords).values()[0] == 0.0);

  // per-channel coordinate rows
  Tensor x2 = Tensor::from_data({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor c2 = Tensor::from_data({2, 2}, {0.0, 1.0, 2.0, 1.5});
  Tensor y2 = warp_time(x2, c2);
  CHECK(y2.values() == std::vector<double>{1, 2, 6, 5.5});

  CHECK_THROWS_AS(warp_time(x2, Tensor::zeros({3, 2})), config_error);
}

TEST_CASE("warp_time gradients w.r.t. signal and coordinates") {
  Rng rng(29);
  Tensor x = Tensor::randn({2, 2, 7}, rng, 0.0, 1.0, true);
  Tensor coords = safe_coords({2, 4}, rng, 0.3, 5.7);
  auto f = [&]() {
    Tensor y = warp_time(x, coords);
    return mean_all(mul(y, y));
  };
  CHECK(grad_check(f, {x, coords}, 1e-5) < 1e-4);
}

TEST_CASE("interp_table reads a fixed table with slope gradients") {
  std::vector<double> table = {0.0, 1.0, 4.0, 9.0};
  Tensor coords = Tensor::from_data({2, 2}, {0.5, 2.0, 2.5, 5.0});
  Tensor y = interp_table(table, coords);
  CHECK(y.values()[0] == doctest::Approx(0.5));
  CHECK(y.values()[1] == doctest::Approx(4.0));
  CHECK(y.values()[2] == doctest::Approx(6.5));
  CHECK(y.values()[3] == 0.0);

  Rng rng(31);
  Tensor cg = safe_coords({1, 6}, rng, 0.2, 2.8);
  auto f = [&]() { return mean_all(interp_table(table, cg)); };
  CHECK(grad_check(f, {cg}, 1e-5) < 1e-6);
}

TEST_CASE("per_cell_dot against explicit dot products") {
  Rng rng(37);
  const std::int64_t bsz = 2, ch = 3, s = 6, tt = 4;
  Tensor x = Tensor::randn({bsz, ch, s}, rng);
  Tensor k = Tensor::randn({ch, tt, s}, rng);
  Tensor y = per_cell_dot(x, k);
  REQUIRE(y.shape() == Shape{bsz, ch, tt});
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t c = 0; c < ch; ++c)
      for (std::int64_t t = 0; t < tt; ++t) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < s; ++i)
          acc += k.values()[(c * tt + t) * s + i] * x.values()[(b * ch + c) * s + i];
        CHECK(std::abs(y.values()[(b * ch + c) * tt + t] - acc) < 1e-12);
      }

  Tensor xg = Tensor::randn({2, 2, 5}, rng, 0.0, 1.0, true);
  Tensor kg = Tensor::randn({2, 3, 5}, rng, 0.0, 1.0, true);
  auto f = [&]() { return mean_all(per_cell_dot(xg, kg)); };
  CHECK(grad_check(f, {xg, kg}, 1e-5) < 1e-6);
}

TEST_CASE("every differentiable op passes grad_check at 20 seeded points") {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(100 + trial);
    Tensor x = Tensor::randn({2, 6}, rng, 0.0, 1.0, true);
    Tensor y = Tensor::randn({2, 6}, rng, 0.0, 1.0, true);

    auto check = [&](const char* name, const std::function<Tensor()>& f,
                     std::vector<Tensor> params, double tol = 1e-4) {
      INFO(name << " trial " << trial);
      CHECK(grad_check(f, std::move(params), 1e-5) < tol);
    };

    check("exp", [&]() { return mean_all(exp(x)); }, {x});
    check("neg", [&]() { return mean_all(mul(neg(x), x)); }, {x});
    check("sqrt", [&]() { return mean_all(sqrt(add(mul(x, x), Tensor::scalar(0.5)))); }, {x});
    check("sigmoid", [&]() { return mean_all(sigmoid(x)); }, {x});
    check("sin", [&]() { return mean_all(sin(x)); }, {x});
    check("cos", [&]() { return mean_all(cos(x)); }, {x});
    check("abs", [&]() { return mean_all(abs(add(x, Tensor::scalar(3.0)))); }, {x});
    check("leaky_relu", [&]() { return mean_all(leaky_relu(x)); }, {x});
    check("add", [&]() { return mean_all(mul(add(x, y), add(x, y))); }, {x, y});
    check("sub", [&]() { return mean_all(mul(sub(x, y), sub(x, y))); }, {x, y});
    check("mul", [&]() { return mean_all(mul(x, y)); }, {x, y});
    check("div", [&]() {
      return mean_all(div(x, add(mul(y, y), Tensor::scalar(0.5))));
    }, {x, y});
    check("atan2", [&]() {
      return mean_all(atan2(x, add(mul(y, y), Tensor::scalar(1.0))));
    }, {x, y});
    check("minimum", [&]() { return mean_all(minimum(x, y)); }, {x, y});
    check("maximum", [&]() { return mean_all(maximum(x, y)); }, {x, y});
  }
}

TEST_CASE("grad_check validates its step size and loss") {
  Tensor p = Tensor::scalar(1.0, true);
  auto f = [&]() { return mul(p, p); };
  CHECK_THROWS_AS(grad_check(f, {p}, 1e-2), config_error);
  CHECK_THROWS_AS(grad_check(f, {p}, 1e-8), config_error);
  CHECK(grad_check(f, {p}, 1e-5) < 1e-9);  // quadratic: exact to rounding

  Tensor q = Tensor::scalar(-1.0, true);
  auto g = [&]() { return div(Tensor::scalar(1.0), add(q, Tensor::scalar(1.0))); };
  CHECK_THROWS_AS(grad_check(g, {q}, 1e-5), numeric_error);  // 1/0 -> inf
}

TEST_CASE("forward determinism: identical runs are bit-identical") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::randn({2, 3, 10}, rng);
    Tensor k = Tensor::randn({3, 5}, rng);
    Tensor w = Tensor::randn({2, 3}, rng);
    Tensor b = Tensor::randn({2}, rng);
    Tensor h = conv1d_depthwise(x, k, Padding::causal_left);
    Tensor out = linear_ct(leaky_relu(h), w, b);
    return out.values();
  };
  CHECK(run(42) == run(42));
}
