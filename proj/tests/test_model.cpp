#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "delaynet/grad_check.hpp"
#include "delaynet/model.hpp"

using namespace delaynet;

namespace {

DelayNetConfig tiny_cfg() {
  DelayNetConfig cfg;
  cfg.F = 2;
  cfg.S = 12;
  cfg.C = 1;
  cfg.T = 6;
  cfg.Fy = 2;
  cfg.Fc = 3;
  cfg.n_low = 2;
  cfg.n_high = 2;
  cfg.agg_low = {1, 1.0, 0};
  cfg.agg_high = {1, 1.0, 0};
  return cfg;
}

// closed-form parameter count mirroring the block structure
std::int64_t predicted_params(const DelayNetConfig& c) {
  auto family_params = [](KernelFamily f) -> std::int64_t {
    return f == KernelFamily::identity ? 0 : 2;
  };
  auto bank = [&](KernelFamily f, std::int64_t features, std::int64_t n) {
    const std::int64_t ch = features * n * (f == KernelFamily::gabor ? 2 : 1);
    std::int64_t total = features * n * family_params(f);
    if (f != KernelFamily::identity) total += 2 * ch;  // gamma, beta
    return total;
  };
  auto agg = [](const AggregatorConfig& a, std::int64_t in, std::int64_t out) {
    const std::int64_t h = std::max<std::int64_t>(
        1, std::llround(a.expansion * static_cast<double>(in)));
    std::int64_t total = 0, prev = in;
    for (std::int64_t i = 0; i < a.n_intermediate; ++i) {
      total += (prev + 1) * h;
      prev = h;
    }
    return total + (prev + 1) * out;
  };
  const std::int64_t low_ch =
      c.F * c.n_low * (c.filter_low == KernelFamily::gabor ? 2 : 1);
  const std::int64_t high_in = c.Fc + c.C;
  const std::int64_t high_ch =
      high_in * c.n_high * (c.filter_high == KernelFamily::gabor ? 2 : 1);
  std::int64_t temporal = 0;
  if (c.temporal.use_causal_conv) {
    temporal = c.Fc * c.Fc * c.temporal.causal_k;
  } else if (c.temporal.family != KernelFamily::identity) {
    temporal = c.Fc * c.T * family_params(c.temporal.family);
    if (c.temporal.apply_batchnorm) temporal += 2 * c.Fc * c.T;
  }
  return bank(c.filter_low, c.F, c.n_low) + agg(c.agg_low, low_ch, c.Fc) +
         temporal + bank(c.filter_high, high_in, c.n_high) +
         agg(c.agg_high, high_ch, c.Fy);
}

}  // namespace

TEST_CASE("model: output shape [B,Fy,T] for several batch sizes") {
  DelayNetConfig cfg = tiny_cfg();
  DelayNet net(cfg, 1);
  Rng rng(2);
  for (std::int64_t b : {1, 7}) {
    Tensor x1 = Tensor::randn({b, cfg.F, cfg.S}, rng);
    Tensor x2 = Tensor::randn({b, cfg.C, cfg.T}, rng);
    Tensor y = net.forward(x1, x2, false);
    CHECK(y.shape() == Shape{b, cfg.Fy, cfg.T});
    for (double v : y.values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("model: same seed gives identical parameters and outputs") {
  DelayNetConfig cfg = tiny_cfg();
  DelayNet a(cfg, 42), b(cfg, 42), c(cfg, 43);
  auto pa = a.named_parameters(), pb = b.named_parameters();
  REQUIRE(pa.size() == pb.size());
  bool all_equal = true;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    if (pa[i].second.values() != pb[i].second.values()) all_equal = false;
  }
  CHECK(all_equal);
  Rng rng(5);
  Tensor x1 = Tensor::randn({2, cfg.F, cfg.S}, rng);
  Tensor x2 = Tensor::randn({2, cfg.C, cfg.T}, rng);
  CHECK(a.forward(x1, x2, false).values() == b.forward(x1, x2, false).values());
  CHECK(a.forward(x1, x2, false).values() != c.forward(x1, x2, false).values());
}

TEST_CASE("model: registered configurations") {
  DelayNetConfig aff = named_config("D_AffAffGau");
  CHECK(aff.filter_low == KernelFamily::affine);
  CHECK(aff.n_low == 4);
  CHECK(aff.agg_low.n_intermediate == 2);
  CHECK(aff.agg_low.expansion == 1.0);
  CHECK(aff.Fc == 8);
  CHECK(aff.temporal.use_causal_conv == false);
  CHECK(aff.temporal.family == KernelFamily::affine);
  CHECK(aff.filter_high == KernelFamily::gauss);
  CHECK(aff.n_high == 8);
  CHECK(aff.agg_high.n_intermediate == 2);
  CHECK(aff.C == 1);
  CHECK(aff.Fy == 2);

  DelayNetConfig log = named_config("D_LogAffGau");
  CHECK(log.filter_low == KernelFamily::lognormal);
  CHECK(log.agg_low.n_intermediate == 8);
  CHECK(log.filter_high == KernelFamily::gauss);

  CHECK_THROWS_AS(named_config("D_Nothing"), config_error);

  // both named nets are constructible and run
  for (const char* name : {"D_AffAffGau", "D_LogAffGau"}) {
    DelayNetConfig cfg = named_config(name);
    cfg.F = 3;
    cfg.S = 30;
    cfg.T = 12;
    DelayNet net(cfg, 9);
    Rng rng(10);
    Tensor y = net.forward(Tensor::randn({2, 3, 30}, rng),
                           Tensor::randn({2, 1, 12}, rng), true);
    CHECK(y.shape() == Shape{2, 2, 12});
  }
}

TEST_CASE("model: invalid config error names the offending fields") {
  DelayNetConfig cfg = tiny_cfg();
  cfg.Fc = 0;
  cfg.n_low = -1;
  try {
    DelayNet net(cfg, 0);
    FAIL("expected config_error");
  } catch (const config_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("Fc") != std::string::npos);
    CHECK(msg.find("n_low") != std::string::npos);
  }
  DelayNetConfig bad = tiny_cfg();
  bad.T = bad.S + 1;  // per-cell affine temporal may extend, identity may not
  bad.temporal.family = KernelFamily::identity;
  CHECK_THROWS_AS(DelayNet(bad, 0), config_error);
}

TEST_CASE("model: zero inputs propagate to zero output") {
  DelayNetConfig cfg = tiny_cfg();
  DelayNet net(cfg, 3);
  Tensor x1 = Tensor::zeros({2, cfg.F, cfg.S});
  Tensor x2 = Tensor::zeros({2, cfg.C, cfg.T});
  for (bool training : {true, false}) {
    Tensor y = net.forward(x1, x2, training);
    for (double v : y.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("model: forward shape mismatches are rejected") {
  DelayNetConfig cfg = tiny_cfg();
  DelayNet net(cfg, 3);
  Rng rng(4);
  Tensor x1 = Tensor::randn({2, cfg.F, cfg.S}, rng);
  Tensor x2 = Tensor::randn({2, cfg.C, cfg.T}, rng);
  CHECK_THROWS_AS(net.forward(Tensor::randn({2, cfg.F + 1, cfg.S}, rng), x2, false),
                  config_error);
  CHECK_THROWS_AS(net.forward(x1, Tensor::randn({2, cfg.C, cfg.T + 2}, rng), false),
                  config_error);
  CHECK_THROWS_AS(net.forward(x1, Tensor::randn({3, cfg.C, cfg.T}, rng), false),
                  config_error);
}

TEST_CASE("model: eval forward is pure and batch-permutation equivariant") {
  DelayNetConfig cfg = tiny_cfg();
  DelayNet net(cfg, 11);
  Rng rng(12);
  Tensor x1 = Tensor::randn({2, cfg.F, cfg.S}, rng);
  Tensor x2 = Tensor::randn({2, cfg.C, cfg.T}, rng);
  Tensor y1 = net.forward(x1, x2, false);
  Tensor y2 = net.forward(x1, x2, false);
  CHECK(y1.values() == y2.values());

  // swap the two samples
  auto swap_batch = [](const Tensor& t) {
    const std::int64_t half = t.numel() / 2;
    std::vector<double> v(t.values().size());
    for (std::int64_t i = 0; i < half; ++i) {
      v[static_cast<std::size_t>(i)] = t.values()[static_cast<std::size_t>(half + i)];
      v[static_cast<std::size_t>(half + i)] = t.values()[static_cast<std::size_t>(i)];
    }
    return Tensor::from_data(t.shape(), v);
  };
  Tensor ys = net.forward(swap_batch(x1), swap_batch(x2), false);
  CHECK(ys.values() == swap_batch(y1).values());
}

TEST_CASE("model: output depends on the commands") {
  DelayNetConfig cfg = tiny_cfg();
  DelayNet net(cfg, 13);
  Rng rng(14);
  Tensor x1 = Tensor::randn({2, cfg.F, cfg.S}, rng);
  Tensor x2 = Tensor::randn({2, cfg.C, cfg.T}, rng, 0.0, 1.0, true);
  Tensor y = net.forward(x1, x2, false);
  mean_all(abs(y)).backward();
  double total = 0.0;
  for (double g : x2.grad()) total += std::abs(g);
  CHECK(total > 0.0);
}

TEST_CASE("model: parameter count matches the closed form") {
  DelayNetConfig cfg = tiny_cfg();
  CHECK(DelayNet(cfg, 0).param_count() == predicted_params(cfg));

  DelayNetConfig doubled = cfg;
  doubled.n_high *= 2;
  CHECK(DelayNet(doubled, 0).param_count() == predicted_params(doubled));

  DelayNetConfig conv_cfg = cfg;
  conv_cfg.temporal.use_causal_conv = true;
  conv_cfg.temporal.causal_k = 5;
  CHECK(DelayNet(conv_cfg, 0).param_count() == predicted_params(conv_cfg));

  DelayNetConfig gabor_cfg = cfg;
  gabor_cfg.filter_high = KernelFamily::gabor;
  CHECK(DelayNet(gabor_cfg, 0).param_count() == predicted_params(gabor_cfg));

  // order-of-magnitude anchor for the full-size default network
  DelayNetConfig full = named_config("D_AffAffGau");
  const std::int64_t n = DelayNet(full, 0).param_count();
  CHECK(n == predicted_params(full));
  CHECK(n >= 8000);
  CHECK(n <= 25000);
}

TEST_CASE("model: zero predictor") {
  Rng rng(21);
  Tensor x1 = Tensor::randn({3, 4, 20}, rng);
  Tensor x2 = Tensor::randn({3, 1, 7}, rng);
  Tensor z = zero_predictor(x1, x2, 2);
  CHECK(z.shape() == Shape{3, 2, 7});
  for (double v : z.values()) CHECK(v == 0.0);
  Tensor y = Tensor::randn({3, 2, 7}, rng);
  double mean_abs = 0.0;
  for (double v : y.values()) mean_abs += std::abs(v);
  mean_abs /= static_cast<double>(y.numel());
  CHECK(mean_all(abs(sub(z, y))).item() == doctest::Approx(mean_abs).epsilon(1e-12));
}

TEST_CASE("model: MAE gradient passes finite differences on the tiny net") {
  for (std::uint64_t seed : {101, 202}) {
    DelayNetConfig cfg = tiny_cfg();
    DelayNet net(cfg, seed);
    Rng rng(seed + 1);
    // randomize gamma/beta too: at the (1,0) init an out-of-range warp cell is
    // batch-constant zero and the check would sit exactly on the leaky kink
    for (auto& [name, bn] : net.batchnorms()) {
      for (double& g : bn->gamma.values()) g = rng.normal(1.0, 0.1);
      for (double& b : bn->beta.values()) b = rng.normal(0.0, 0.1);
    }
    Tensor x1 = Tensor::randn({3, cfg.F, cfg.S}, rng, 0.0, 1.0, true);
    Tensor x2 = Tensor::randn({3, cfg.C, cfg.T}, rng, 0.0, 1.0, true);
    Tensor y = Tensor::randn({3, cfg.Fy, cfg.T}, rng);
    auto loss = [&]() {
      return mean_all(abs(sub(net.forward(x1, x2, true), y)));
    };
    std::vector<Tensor> params = net.parameters();
    params.push_back(x1);
    params.push_back(x2);
    INFO("seed " << seed);
    CHECK(grad_check(loss, params, 1e-5) < 1e-3);
  }
}
