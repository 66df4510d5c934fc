#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "delaynet/ops.hpp"
#include "delaynet/rng.hpp"
#include "delaynet/tensor.hpp"

namespace delaynet {

enum class KernelFamily { identity, affine, gauss, lognormal, gabor };

std::string family_name(KernelFamily f);
KernelFamily family_from_name(const std::string& name);

/// Learnable scalars of one filter instance. Only the fields the family
/// uses are allocated; identity has none.
struct KernelParams {
  KernelFamily family = KernelFamily::identity;
  Tensor s;      // log-scale
  Tensor t;      // translation, timesteps
  Tensor mu;     // center offset, timesteps
  Tensor sigma;  // log-stdev
};

/// Draws parameters from the family's init distributions:
///   affine    s~N(0,0.15), t~N(0,0.1)
///   gauss     sigma~N(0,0.1), mu~N(0, 0.01*S/2)
///   lognormal s~N(0,0.5),  t~N(0,0.1)
///   gabor     s~N(2,1),    mu~N(0, 0.2/S)
KernelParams init_params(KernelFamily family, std::int64_t s_len, Rng& rng);
KernelParams init_params(KernelFamily family, std::int64_t s_len,
                         std::uint64_t seed);

/// k[i] = exp(-((x_i - mu)/e^sigma)^2) over integer offsets
/// x ∈ {-(K-1)/2 .. (K-1)/2}. Tap 0 touches the oldest sample under the
/// convolution's indexing, so the offset grid runs past-positive: a positive
/// mu centers the kernel on past samples and the filter delays.
/// Unnormalized; K must be odd.
Tensor gauss_kernel(const KernelParams& p, std::int64_t support);

/// Base k(x) = (1/x) exp(-(log x)^2 / 2) for x > 0, shifted so its mode
/// (x = e^-1) sits at grid offset 0, then warped along the time axis by
/// u -> a*u + a*t with a = e^s + 3 and resampled at integer offsets by
/// linear interpolation (offsets mapping left of the mode read 0).
/// K must be odd.
Tensor lognormal_kernel(const KernelParams& p, std::int64_t support);

/// Complex bandpass pair sampled at integer offsets around mu:
///   omega = sigmoid(s)*(0.5 - 2/S) + 2/S
///   sigma_g = omega * sqrt(log2/pi) * (2^bw + 1)/(2^bw - 1)
///   re/im = exp(-((x-mu)/sigma_g)^2 / 2) * cos/sin(2*pi*omega*(x-mu))
/// Support covers mu +- 4*sigma_g. Requires S >= 5.
std::pair<Tensor, Tensor> gabor_kernel(const KernelParams& p,
                                       std::int64_t s_len, double bw = 2.5);

/// Half-width of the support gabor_kernel would pick for the current
/// parameter values. Lets a bank evaluate several instances on one shared
/// (wider) grid.
std::int64_t gabor_auto_half(const KernelParams& p, std::int64_t s_len,
                             double bw = 2.5);

/// gabor_kernel evaluated on an explicit odd support (must cover at least
/// the automatic choice to keep the tails negligible).
std::pair<Tensor, Tensor> gabor_kernel_at(const KernelParams& p,
                                          std::int64_t s_len, double bw,
                                          std::int64_t support);

/// Convolves x with the re/im pair (same-length zero padding) and folds the
/// two responses into magnitude sqrt(o_re^2 + o_im^2 + eps) and angle
/// atan2(o_im, o_re). eps > 0 guards the square root's derivative.
std::pair<Tensor, Tensor> gabor_response(const Tensor& x, const Tensor& re,
                                         const Tensor& im, double eps = 1e-8);

/// Time-warps every channel of x [B,Ch,S]: output[u] reads x at
/// a*(u - c) + a*t + c with a = e^{5s} and c = (S-1)/2, linear
/// interpolation, zero outside the window.
Tensor affine_warp(const Tensor& x, const KernelParams& p);

}  // namespace delaynet
