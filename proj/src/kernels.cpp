#include "delaynet/kernels.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace delaynet {

namespace {

void require_family(const char* op, const KernelParams& p, KernelFamily want) {
  if (p.family != want)
    throw config_error(std::string(op) + ": expected " + family_name(want) +
                       " parameters, got " + family_name(p.family));
}

void require_odd(const char* op, std::int64_t k) {
  if (k < 1 || k % 2 == 0)
    throw config_error(std::string(op) + ": support must be odd and positive, got " +
                       std::to_string(k));
}

// Offset of each tap measured backward from the window position: tap 0 is
// the oldest sample the convolution touches.
Tensor offset_grid(std::int64_t k) {
  const std::int64_t c = (k - 1) / 2;
  std::vector<double> g(static_cast<std::size_t>(k));
  for (std::int64_t j = 0; j < k; ++j)
    g[static_cast<std::size_t>(j)] = static_cast<double>(c - j);
  return Tensor::from_data({k}, std::move(g));
}

double lognormal_base(double x) {
  if (x <= 0.0) return 0.0;
  const double lx = std::log(x);
  return std::exp(-0.5 * lx * lx) / x;
}

}  // namespace

std::string family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::identity: return "identity";
    case KernelFamily::affine: return "affine";
    case KernelFamily::gauss: return "gauss";
    case KernelFamily::lognormal: return "lognormal";
    case KernelFamily::gabor: return "gabor";
  }
  return "?";
}

KernelFamily family_from_name(const std::string& name) {
  if (name == "identity") return KernelFamily::identity;
  if (name == "affine") return KernelFamily::affine;
  if (name == "gauss") return KernelFamily::gauss;
  if (name == "lognormal") return KernelFamily::lognormal;
  if (name == "gabor") return KernelFamily::gabor;
  throw config_error("unknown kernel family \"" + name + "\"");
}

KernelParams init_params(KernelFamily family, std::int64_t s_len, Rng& rng) {
  KernelParams p;
  p.family = family;
  const double sd = static_cast<double>(s_len);
  switch (family) {
    case KernelFamily::identity:
      break;
    case KernelFamily::affine:
      p.s = Tensor::scalar(rng.normal(0.0, 0.15), true);
      p.t = Tensor::scalar(rng.normal(0.0, 0.1), true);
      break;
    case KernelFamily::gauss:
      p.sigma = Tensor::scalar(rng.normal(0.0, 0.1), true);
      p.mu = Tensor::scalar(rng.normal(0.0, 0.01 * sd / 2.0), true);
      break;
    case KernelFamily::lognormal:
      p.s = Tensor::scalar(rng.normal(0.0, 0.5), true);
      p.t = Tensor::scalar(rng.normal(0.0, 0.1), true);
      break;
    case KernelFamily::gabor:
      p.s = Tensor::scalar(rng.normal(2.0, 1.0), true);
      p.mu = Tensor::scalar(rng.normal(0.0, 0.2 / sd), true);
      break;
  }
  return p;
}

KernelParams init_params(KernelFamily family, std::int64_t s_len,
                         std::uint64_t seed) {
  Rng rng(seed);
  return init_params(family, s_len, rng);
}

Tensor gauss_kernel(const KernelParams& p, std::int64_t support) {
  require_family("gauss_kernel", p, KernelFamily::gauss);
  require_odd("gauss_kernel", support);
  Tensor z = div(sub(offset_grid(support), p.mu), exp(p.sigma));
  return exp(neg(mul(z, z)));
}

Tensor lognormal_kernel(const KernelParams& p, std::int64_t support) {
  require_family("lognormal_kernel", p, KernelFamily::lognormal);
  require_odd("lognormal_kernel", support);
  const double c = static_cast<double>((support - 1) / 2);
  const double a_now = std::exp(p.s.item()) + 3.0;
  const double reach = a_now * (c + p.t.item());
  const std::int64_t table_len =
      std::max<std::int64_t>(2, static_cast<std::int64_t>(std::ceil(reach)) + 2);
  std::vector<double> table(static_cast<std::size_t>(table_len));
  for (std::int64_t m = 0; m < table_len; ++m)
    table[static_cast<std::size_t>(m)] =
        lognormal_base(static_cast<double>(m) + std::exp(-1.0));
  Tensor a = exp(p.s) + 3.0;
  Tensor coords = mul(add(offset_grid(support), p.t), a);
  return interp_table(std::move(table), coords);
}

std::int64_t gabor_auto_half(const KernelParams& p, std::int64_t s_len,
                             double bw) {
  require_family("gabor_kernel", p, KernelFamily::gabor);
  if (s_len < 5)
    throw config_error("gabor_kernel: window length " + std::to_string(s_len) +
                       " too short, omega range degenerates below 5");
  const double sd = static_cast<double>(s_len);
  const double band = std::sqrt(std::numbers::ln2 / std::numbers::pi) *
                      (std::pow(2.0, bw) + 1.0) / (std::pow(2.0, bw) - 1.0);
  const double s_now = p.s.item();
  const double omega_now =
      (s_now >= 0.0 ? 1.0 / (1.0 + std::exp(-s_now))
                    : std::exp(s_now) / (1.0 + std::exp(s_now))) *
          (0.5 - 2.0 / sd) +
      2.0 / sd;
  const double sigma_now = omega_now * band;
  std::int64_t half = static_cast<std::int64_t>(
      std::ceil(std::abs(p.mu.item()) + 4.0 * sigma_now));
  return std::max<std::int64_t>(1, std::min(half, s_len - 1));
}

std::pair<Tensor, Tensor> gabor_kernel(const KernelParams& p,
                                       std::int64_t s_len, double bw) {
  return gabor_kernel_at(p, s_len, bw, 2 * gabor_auto_half(p, s_len, bw) + 1);
}

std::pair<Tensor, Tensor> gabor_kernel_at(const KernelParams& p,
                                          std::int64_t s_len, double bw,
                                          std::int64_t support) {
  require_family("gabor_kernel", p, KernelFamily::gabor);
  require_odd("gabor_kernel", support);
  if (s_len < 5)
    throw config_error("gabor_kernel: window length " + std::to_string(s_len) +
                       " too short, omega range degenerates below 5");
  const double sd = static_cast<double>(s_len);
  const double band = std::sqrt(std::numbers::ln2 / std::numbers::pi) *
                      (std::pow(2.0, bw) + 1.0) / (std::pow(2.0, bw) - 1.0);
  Tensor omega = add(mul(sigmoid(p.s), Tensor::scalar(0.5 - 2.0 / sd)),
                     Tensor::scalar(2.0 / sd));
  Tensor sigma_g = mul(omega, Tensor::scalar(band));
  Tensor d = sub(offset_grid(support), p.mu);
  Tensor z = div(d, sigma_g);
  Tensor envelope = exp(mul(mul(z, z), Tensor::scalar(-0.5)));
  Tensor phase = mul(d, mul(omega, Tensor::scalar(2.0 * std::numbers::pi)));
  return {mul(envelope, cos(phase)), mul(envelope, sin(phase))};
}

std::pair<Tensor, Tensor> gabor_response(const Tensor& x, const Tensor& re,
                                         const Tensor& im, double eps) {
  if (x.rank() != 3)
    throw config_error("gabor_response: expected [B,Ch,S] input, got " +
                       shape_str(x.shape()));
  if (re.rank() != 1 || im.rank() != 1 || re.numel() != im.numel())
    throw config_error("gabor_response: re/im must be equal-length vectors");
  if (!(eps > 0.0)) throw config_error("gabor_response: eps must be positive");
  const std::int64_t ch = x.dim(1);
  std::vector<Tensor> re_rows(static_cast<std::size_t>(ch), re);
  std::vector<Tensor> im_rows(static_cast<std::size_t>(ch), im);
  Tensor o_re = conv1d_depthwise(x, stack_rows(re_rows), Padding::same_zero);
  Tensor o_im = conv1d_depthwise(x, stack_rows(im_rows), Padding::same_zero);
  Tensor mag = sqrt(add(add(mul(o_re, o_re), mul(o_im, o_im)),
                        Tensor::scalar(eps)));
  Tensor ang = atan2(o_im, o_re);
  for (std::size_t i = 0; i < mag.values().size(); ++i)
    if (!std::isfinite(mag.values()[i]) || !std::isfinite(ang.values()[i]))
      throw numeric_error(
          "gabor_response: non-finite response at flat index " +
          std::to_string(i) + " (mag=" + std::to_string(mag.values()[i]) +
          ", ang=" + std::to_string(ang.values()[i]) + ")");
  return {mag, ang};
}

Tensor affine_warp(const Tensor& x, const KernelParams& p) {
  require_family("affine_warp", p, KernelFamily::affine);
  if (x.rank() != 3)
    throw config_error("affine_warp: expected [B,Ch,S] input, got " +
                       shape_str(x.shape()));
  const std::int64_t s_len = x.dim(2);
  const double c = static_cast<double>(s_len - 1) / 2.0;
  std::vector<double> grid(static_cast<std::size_t>(s_len));
  for (std::int64_t u = 0; u < s_len; ++u)
    grid[static_cast<std::size_t>(u)] = static_cast<double>(u) - c;
  Tensor centered = Tensor::from_data({1, s_len}, std::move(grid));
  Tensor a = exp(mul(p.s, Tensor::scalar(5.0)));
  Tensor coords = add(mul(add(centered, p.t), a), Tensor::scalar(c));
  return warp_time(x, coords);
}

}  // namespace delaynet
