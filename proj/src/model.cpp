#include "delaynet/model.hpp"

#include <string>

#include "delaynet/ops.hpp"

namespace delaynet {

namespace {

DelayNetConfig checked(const DelayNetConfig& cfg) {
  std::string bad;
  auto flag = [&](const char* field) {
    if (!bad.empty()) bad += ", ";
    bad += field;
  };
  if (cfg.F < 1) flag("F");
  if (cfg.S < 1) flag("S");
  if (cfg.C < 1) flag("C");
  if (cfg.T < 1) flag("T");
  if (cfg.Fy < 1) flag("Fy");
  if (cfg.Fc < 1) flag("Fc");
  if (cfg.n_low < 1) flag("n_low");
  if (cfg.n_high < 1) flag("n_high");
  if (cfg.agg_low.n_intermediate < 0) flag("agg_low.n_intermediate");
  if (cfg.agg_low.expansion <= 0.0) flag("agg_low.expansion");
  if (cfg.agg_high.n_intermediate < 0) flag("agg_high.n_intermediate");
  if (cfg.agg_high.expansion <= 0.0) flag("agg_high.expansion");
  if (cfg.temporal.use_causal_conv) {
    if (cfg.temporal.causal_k < 1) flag("temporal.causal_k");
    if (cfg.T > cfg.S) flag("T");
  } else {
    if (cfg.temporal.family == KernelFamily::gabor) flag("temporal.family");
    if (cfg.temporal.family == KernelFamily::identity && cfg.T > cfg.S)
      flag("T");
  }
  if (!bad.empty()) throw config_error("invalid model config, fields: " + bad);
  return cfg;
}

FilterBankConfig low_cfg(const DelayNetConfig& c) {
  FilterBankConfig f;
  f.family = c.filter_low;
  f.n_filters = c.n_low;
  f.mode = BankMode::per_feature;
  return f;
}

FilterBankConfig high_cfg(const DelayNetConfig& c) {
  FilterBankConfig f;
  f.family = c.filter_high;
  f.n_filters = c.n_high;
  f.mode = BankMode::per_feature;
  return f;
}

AggregatorConfig with_out(AggregatorConfig a, std::int64_t out) {
  a.out_features = out;
  return a;
}

void add_bank(std::vector<std::pair<std::string, Tensor>>& out,
              const std::string& prefix, const FilterBank& bank) {
  for (std::size_t i = 0; i < bank.kernels.size(); ++i) {
    const KernelParams& p = bank.kernels[i];
    const std::string base = prefix + ".k" + std::to_string(i);
    if (p.s.defined()) out.emplace_back(base + ".s", p.s);
    if (p.t.defined()) out.emplace_back(base + ".t", p.t);
    if (p.mu.defined()) out.emplace_back(base + ".mu", p.mu);
    if (p.sigma.defined()) out.emplace_back(base + ".sigma", p.sigma);
  }
  if (bank.bn) {
    out.emplace_back(prefix + ".bn.gamma", bank.bn->gamma);
    out.emplace_back(prefix + ".bn.beta", bank.bn->beta);
  }
}

void add_agg(std::vector<std::pair<std::string, Tensor>>& out,
             const std::string& prefix, const Aggregator& agg) {
  for (std::size_t i = 0; i < agg.w.size(); ++i) {
    out.emplace_back(prefix + ".w" + std::to_string(i), agg.w[i]);
    out.emplace_back(prefix + ".b" + std::to_string(i), agg.b[i]);
  }
}

}  // namespace

DelayNetConfig named_config(const std::string& name) {
  DelayNetConfig cfg;  // defaults are D_AffAffGau
  if (name == "D_AffAffGau") return cfg;
  if (name == "D_LogAffGau") {
    cfg.filter_low = KernelFamily::lognormal;
    cfg.agg_low.n_intermediate = 8;
    return cfg;
  }
  throw config_error("unknown model config: " + name);
}

DelayNet::DelayNet(const DelayNetConfig& cfg_in, std::uint64_t seed)
    : cfg(checked(cfg_in)),
      rng_(seed),
      filter_low(low_cfg(cfg), cfg.F, cfg.S, rng_),
      agg_low(with_out(cfg.agg_low, cfg.Fc), filter_low.out_channels(), rng_),
      temporal(cfg.temporal, cfg.Fc, cfg.S, cfg.T, rng_),
      filter_high(high_cfg(cfg), cfg.Fc + cfg.C, cfg.T, rng_),
      agg_high(with_out(cfg.agg_high, cfg.Fy), filter_high.out_channels(),
               rng_) {}

Tensor DelayNet::forward(const Tensor& x1, const Tensor& x2, bool training) {
  if (x1.rank() != 3 || x1.dim(1) != cfg.F || x1.dim(2) != cfg.S)
    throw config_error("model forward: x1 must be [B," +
                       std::to_string(cfg.F) + "," + std::to_string(cfg.S) +
                       "], got " + shape_str(x1.shape()));
  if (x2.rank() != 3 || x2.dim(0) != x1.dim(0) || x2.dim(1) != cfg.C ||
      x2.dim(2) != cfg.T)
    throw config_error("model forward: x2 must be [" +
                       std::to_string(x1.dim(0)) + "," +
                       std::to_string(cfg.C) + "," + std::to_string(cfg.T) +
                       "], got " + shape_str(x2.shape()));
  Tensor h = filter_low.forward(x1, training);
  h = agg_low.forward(h);
  h = leaky_relu(h);
  h = temporal.forward(h, training);
  h = leaky_relu(h);
  h = concat_channels(h, x2);
  h = filter_high.forward(h, training);
  h = leaky_relu(h);
  return agg_high.forward(h);
}

std::vector<Tensor> DelayNet::parameters() {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> DelayNet::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  add_bank(out, "filter_low", filter_low);
  add_agg(out, "agg_low", agg_low);
  if (temporal.bank) add_bank(out, "temporal.bank", *temporal.bank);
  if (temporal.conv) out.emplace_back("temporal.conv.w", temporal.conv->w);
  add_bank(out, "filter_high", filter_high);
  add_agg(out, "agg_high", agg_high);
  return out;
}

std::vector<std::pair<std::string, BatchNorm*>> DelayNet::batchnorms() {
  std::vector<std::pair<std::string, BatchNorm*>> out;
  if (filter_low.bn) out.emplace_back("filter_low.bn", &*filter_low.bn);
  if (temporal.bank && temporal.bank->bn)
    out.emplace_back("temporal.bank.bn", &*temporal.bank->bn);
  if (filter_high.bn) out.emplace_back("filter_high.bn", &*filter_high.bn);
  return out;
}

std::int64_t DelayNet::param_count() {
  std::int64_t total = 0;
  for (auto& t : parameters()) total += t.numel();
  return total;
}

Tensor zero_predictor(const Tensor& x1, const Tensor& x2, std::int64_t fy) {
  if (x1.rank() != 3 || x2.rank() != 3 || fy < 1)
    throw config_error("zero_predictor: expected [B,F,S] and [B,C,T] inputs");
  return Tensor::zeros({x1.dim(0), fy, x2.dim(2)});
}

}  // namespace delaynet
