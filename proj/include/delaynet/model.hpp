#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "delaynet/layers.hpp"

namespace delaynet {

// Full network configuration. The low bank filters the known past X1 [B,F,S],
// the high bank filters the concatenation of the bottleneck output with the
// future commands X2 [B,C,T]. Aggregator out_features are derived from Fc and
// Fy at build time; the values inside agg_low/agg_high are ignored.
struct DelayNetConfig {
  std::int64_t F = 5;
  std::int64_t S = 100;
  std::int64_t C = 1;
  std::int64_t T = 60;
  std::int64_t Fy = 2;
  std::int64_t Fc = 8;
  std::int64_t n_low = 4;
  std::int64_t n_high = 8;
  KernelFamily filter_low = KernelFamily::affine;
  KernelFamily filter_high = KernelFamily::gauss;
  TemporalConfig temporal;
  AggregatorConfig agg_low{2, 1.0, 0};
  AggregatorConfig agg_high{2, 1.0, 0};
};

// registered configurations: D_AffAffGau, D_LogAffGau
DelayNetConfig named_config(const std::string& name);

class DelayNet {
 public:
  DelayNet(const DelayNetConfig& cfg, std::uint64_t seed);

  // x1 [B,F,S], x2 [B,C,T] -> [B,Fy,T]
  Tensor forward(const Tensor& x1, const Tensor& x2, bool training);

  std::vector<Tensor> parameters();
  std::vector<std::pair<std::string, Tensor>> named_parameters();
  std::vector<std::pair<std::string, BatchNorm*>> batchnorms();
  std::int64_t param_count();

  DelayNetConfig cfg;

 private:
  Rng rng_;

 public:
  FilterBank filter_low;
  Aggregator agg_low;
  TemporalAggregate temporal;
  FilterBank filter_high;
  Aggregator agg_high;
};

// baseline: all zeros in normalized space, shape [B,Fy,T]
Tensor zero_predictor(const Tensor& x1, const Tensor& x2, std::int64_t fy);

}  // namespace delaynet
