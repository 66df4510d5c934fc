#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "delaynet/kernels.hpp"
#include "delaynet/ops.hpp"
#include "delaynet/rng.hpp"
#include "delaynet/tensor.hpp"

namespace delaynet {

enum class BankMode { per_feature, per_cell };

struct FilterBankConfig {
  KernelFamily family = KernelFamily::identity;
  std::int64_t n_filters = 1;  // filters per input feature
  BankMode mode = BankMode::per_feature;
  std::int64_t out_time = 0;  // per_cell output length
  bool apply_batchnorm = true;  // forced off for identity
  // Convolution support for per_feature gauss/lognormal; 0 picks an
  // automatic width from the initialized parameters. Set explicitly when
  // kernels are expected to travel far from their initialization.
  std::int64_t kernel_support = 0;
};

/// Channel-wise batch normalization with running statistics. per_channel
/// averages over (batch, time) per channel; per_cell keeps independent
/// statistics and scale/shift for every (channel, time) cell, averaging
/// over the batch only. Biased variance throughout.
struct BatchNorm {
  enum class Stats { per_channel, per_cell };
  Stats stats = Stats::per_channel;
  std::int64_t channels = 0;
  std::int64_t cells = 1;  // time length when per_cell
  double momentum = 0.1;
  double eps = 1e-5;
  Tensor gamma, beta;  // flat [channels * cells]
  std::vector<double> running_mean, running_var;

  BatchNorm() = default;
  BatchNorm(Stats stats, std::int64_t channels, std::int64_t cells = 1);
  Tensor forward(const Tensor& x, bool training);
  std::vector<Tensor> parameters() const { return {gamma, beta}; }
};

/// Learnable filter bank over [B,F,S]. per_feature applies one kernel per
/// (feature, slot) channel along the whole window; per_cell learns an
/// independent full-aperture kernel for every (feature, slot, output
/// position) and emits [B, n*F, out_time]. Output channel (f, j) lives at
/// index f*n + j; gabor doubles the channel count with all magnitudes
/// first, then all angles.
struct FilterBank {
  FilterBankConfig cfg;
  std::int64_t in_features = 0;
  std::int64_t in_time = 0;
  std::int64_t support = 0;  // resolved per_feature convolution width
  std::vector<KernelParams> kernels;  // row-major (f, j[, tau])
  std::optional<BatchNorm> bn;

  FilterBank() = default;
  FilterBank(FilterBankConfig cfg, std::int64_t in_features,
             std::int64_t in_time, Rng& rng);
  Tensor forward(const Tensor& x, bool training);
  std::int64_t out_channels() const;
  std::vector<Tensor> parameters() const;
};

struct AggregatorConfig {
  std::int64_t n_intermediate = 0;  // 0 = one linear layer, no activation
  double expansion = 1.0;           // hidden width as a multiple of the input
  std::int64_t out_features = 1;
};

/// Per-timestep fully connected stack: the same weights are applied
/// independently at every time position, LeakyReLU between layers and none
/// after the last.
struct Aggregator {
  AggregatorConfig cfg;
  std::int64_t in_channels = 0;
  std::vector<Tensor> w;  // layer i: [out_i, in_i]
  std::vector<Tensor> b;  // layer i: [out_i]

  Aggregator() = default;
  Aggregator(AggregatorConfig cfg, std::int64_t in_channels, Rng& rng);
  Tensor forward(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
  std::int64_t weight_count() const;
};

/// Causal channel-mixing convolution (no bias): output[t] sees x[.., 0..t].
struct CausalConv {
  Tensor w;  // [out_channels, in_channels, k]

  CausalConv() = default;
  CausalConv(std::int64_t in_channels, std::int64_t out_channels,
             std::int64_t k, Rng& rng);
  Tensor forward(const Tensor& x) const { return conv1d_causal(x, w); }
};

struct TemporalConfig {
  bool use_causal_conv = false;
  KernelFamily family = KernelFamily::affine;  // per-cell bank otherwise
  std::int64_t causal_k = 9;
  bool apply_batchnorm = true;
};

/// Shrinks the time axis from in_time to out_time while keeping the channel
/// count: either a per-cell filter bank (one filter per channel and output
/// position, full input aperture) or a causal convolution followed by
/// cropping to the trailing out_time positions.
struct TemporalAggregate {
  TemporalConfig cfg;
  std::int64_t channels = 0;
  std::int64_t in_time = 0;
  std::int64_t out_time = 0;
  std::optional<FilterBank> bank;
  std::optional<CausalConv> conv;

  TemporalAggregate() = default;
  TemporalAggregate(TemporalConfig cfg, std::int64_t channels,
                    std::int64_t in_time, std::int64_t out_time, Rng& rng);
  Tensor forward(const Tensor& x, bool training);
  std::vector<Tensor> parameters() const;
};

}  // namespace delaynet
