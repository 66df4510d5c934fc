#include "delaynet/layers.hpp"

#include <cmath>
#include <numbers>

namespace delaynet {

namespace {

constexpr double kGaborEps = 1e-8;
constexpr double kGaborBandwidth = 2.5;

std::int64_t odd_cap(std::int64_t s) { return s % 2 == 0 ? s - 1 : s; }

double gabor_band_factor(double bw) {
  return std::sqrt(std::numbers::ln2 / std::numbers::pi) *
         (std::pow(2.0, bw) + 1.0) / (std::pow(2.0, bw) - 1.0);
}

}  // namespace

BatchNorm::BatchNorm(Stats stats_, std::int64_t channels_, std::int64_t cells_)
    : stats(stats_), channels(channels_), cells(cells_) {
  if (channels < 1 || cells < 1)
    throw config_error("batchnorm: invalid extent " + std::to_string(channels) +
                       "x" + std::to_string(cells));
  const std::int64_t groups = stats == Stats::per_cell ? channels * cells : channels;
  gamma = Tensor::full({groups}, 1.0, true);
  beta = Tensor::zeros({groups}, true);
  running_mean.assign(static_cast<std::size_t>(groups), 0.0);
  running_var.assign(static_cast<std::size_t>(groups), 1.0);
}

Tensor BatchNorm::forward(const Tensor& x, bool training) {
  if (x.rank() != 3 || x.dim(1) != channels)
    throw config_error("batchnorm: input " + shape_str(x.shape()) +
                       " does not carry " + std::to_string(channels) +
                       " channels");
  if (stats == Stats::per_cell && x.dim(2) != cells)
    throw config_error("batchnorm: per-cell stats sized for " +
                       std::to_string(cells) + " positions, input has " +
                       std::to_string(x.dim(2)));
  const std::int64_t bsz = x.dim(0), ch = x.dim(1), len = x.dim(2);
  const bool per_cell = stats == Stats::per_cell;
  const std::int64_t groups = per_cell ? ch * len : ch;
  const std::int64_t n = per_cell ? bsz : bsz * len;
  if (training && n < 2)
    throw config_error("batchnorm: need at least 2 values per statistic in "
                       "training mode, got " + std::to_string(n));

  std::vector<double> mean(static_cast<std::size_t>(groups), 0.0);
  std::vector<double> inv(static_cast<std::size_t>(groups), 0.0);
  const double* px = x.data();
  if (training) {
    std::vector<double> var(static_cast<std::size_t>(groups), 0.0);
    for (std::int64_t b = 0; b < bsz; ++b)
      for (std::int64_t c = 0; c < ch; ++c) {
        const double* row = px + (b * ch + c) * len;
        for (std::int64_t t = 0; t < len; ++t)
          mean[static_cast<std::size_t>(per_cell ? c * len + t : c)] += row[t];
      }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::int64_t b = 0; b < bsz; ++b)
      for (std::int64_t c = 0; c < ch; ++c) {
        const double* row = px + (b * ch + c) * len;
        for (std::int64_t t = 0; t < len; ++t) {
          const std::size_t g = static_cast<std::size_t>(per_cell ? c * len + t : c);
          const double d = row[t] - mean[g];
          var[g] += d * d;
        }
      }
    for (std::int64_t g = 0; g < groups; ++g) {
      var[static_cast<std::size_t>(g)] /= static_cast<double>(n);
      inv[static_cast<std::size_t>(g)] =
          1.0 / std::sqrt(var[static_cast<std::size_t>(g)] + eps);
      running_mean[static_cast<std::size_t>(g)] =
          (1.0 - momentum) * running_mean[static_cast<std::size_t>(g)] +
          momentum * mean[static_cast<std::size_t>(g)];
      running_var[static_cast<std::size_t>(g)] =
          (1.0 - momentum) * running_var[static_cast<std::size_t>(g)] +
          momentum * var[static_cast<std::size_t>(g)];
    }
  } else {
    for (std::int64_t g = 0; g < groups; ++g) {
      mean[static_cast<std::size_t>(g)] = running_mean[static_cast<std::size_t>(g)];
      inv[static_cast<std::size_t>(g)] =
          1.0 / std::sqrt(running_var[static_cast<std::size_t>(g)] + eps);
    }
  }

  std::vector<double> out(static_cast<std::size_t>(bsz * ch * len));
  const double* pg = gamma.data();
  const double* pb = beta.data();
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t c = 0; c < ch; ++c) {
      const double* row = px + (b * ch + c) * len;
      double* orow = out.data() + (b * ch + c) * len;
      for (std::int64_t t = 0; t < len; ++t) {
        const std::size_t g = static_cast<std::size_t>(per_cell ? c * len + t : c);
        orow[t] = pg[g] * (row[t] - mean[g]) * inv[g] + pb[g];
      }
    }

  return Tensor::make_node(
      x.shape(), std::move(out), {x.impl(), gamma.impl(), beta.impl()},
      [bsz, ch, len, per_cell, n, training, mean = std::move(mean),
       inv = std::move(inv)](TensorImpl& self) {
        TensorImpl& px = *self.parents[0];
        TensorImpl& pgam = *self.parents[1];
        TensorImpl& pbet = *self.parents[2];
        const std::int64_t groups = per_cell ? ch * len : ch;
        // per-group sums of dy and dy*xhat
        std::vector<double> s1(static_cast<std::size_t>(groups), 0.0);
        std::vector<double> s2(static_cast<std::size_t>(groups), 0.0);
        for (std::int64_t b = 0; b < bsz; ++b)
          for (std::int64_t c = 0; c < ch; ++c) {
            const double* xrow = px.v.data() + (b * ch + c) * len;
            const double* grow = self.g.data() + (b * ch + c) * len;
            for (std::int64_t t = 0; t < len; ++t) {
              const std::size_t g = static_cast<std::size_t>(per_cell ? c * len + t : c);
              s1[g] += grow[t];
              s2[g] += grow[t] * (xrow[t] - mean[g]) * inv[g];
            }
          }
        if (!pbet.g.empty())
          for (std::int64_t g = 0; g < groups; ++g)
            pbet.g[static_cast<std::size_t>(g)] += s1[static_cast<std::size_t>(g)];
        if (!pgam.g.empty())
          for (std::int64_t g = 0; g < groups; ++g)
            pgam.g[static_cast<std::size_t>(g)] += s2[static_cast<std::size_t>(g)];
        if (!px.g.empty()) {
          const double nd = static_cast<double>(n);
          for (std::int64_t b = 0; b < bsz; ++b)
            for (std::int64_t c = 0; c < ch; ++c) {
              const double* xrow = px.v.data() + (b * ch + c) * len;
              const double* grow = self.g.data() + (b * ch + c) * len;
              double* dxrow = px.g.data() + (b * ch + c) * len;
              for (std::int64_t t = 0; t < len; ++t) {
                const std::size_t g =
                    static_cast<std::size_t>(per_cell ? c * len + t : c);
                const double gv = pgam.v[g] * inv[g];
                if (training) {
                  const double xhat = (xrow[t] - mean[g]) * inv[g];
                  dxrow[t] += gv * (grow[t] - s1[g] / nd - xhat * s2[g] / nd);
                } else {
                  dxrow[t] += gv * grow[t];
                }
              }
            }
        }
      });
}

FilterBank::FilterBank(FilterBankConfig cfg_, std::int64_t in_features_,
                       std::int64_t in_time_, Rng& rng)
    : cfg(cfg_), in_features(in_features_), in_time(in_time_) {
  if (in_features < 1 || in_time < 1)
    throw config_error("filter_bank: invalid input extent " +
                       std::to_string(in_features) + "x" +
                       std::to_string(in_time));
  if (cfg.n_filters < 1)
    throw config_error("filter_bank: n_filters must be >= 1, got " +
                       std::to_string(cfg.n_filters));
  if (cfg.mode == BankMode::per_cell && cfg.out_time < 1)
    throw config_error("filter_bank: per_cell mode needs out_time >= 1");
  if (cfg.family == KernelFamily::identity) {
    cfg.apply_batchnorm = false;  // identity passes data through untouched
    if (cfg.mode == BankMode::per_cell && cfg.out_time > in_time)
      throw config_error("filter_bank: identity cannot extend time from " +
                         std::to_string(in_time) + " to " +
                         std::to_string(cfg.out_time));
  }

  const std::int64_t per_feature_count = in_features * cfg.n_filters;
  const std::int64_t count = cfg.mode == BankMode::per_cell
                                 ? per_feature_count * cfg.out_time
                                 : per_feature_count;
  kernels.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i)
    kernels.push_back(init_params(cfg.family, in_time, rng));

  if (cfg.mode == BankMode::per_feature) {
    if (cfg.kernel_support != 0) {
      if (cfg.kernel_support < 1 || cfg.kernel_support % 2 == 0 ||
          cfg.kernel_support > 2 * in_time)
        throw config_error("filter_bank: kernel_support must be odd, "
                           "positive and at most twice the window, got " +
                           std::to_string(cfg.kernel_support));
      support = cfg.kernel_support;
    } else if (cfg.family == KernelFamily::gauss) {
      double sig_max = 0.0;
      for (const auto& p : kernels) sig_max = std::max(sig_max, p.sigma.item());
      const std::int64_t want =
          2 * static_cast<std::int64_t>(std::ceil(4.0 * std::exp(sig_max + 0.5))) + 1;
      support = std::min(want, odd_cap(in_time));
    } else if (cfg.family == KernelFamily::lognormal) {
      // the warped base decays below 1e-3 within ~13.5/a offsets and a > 3
      support = std::min<std::int64_t>(11, odd_cap(in_time));
    }
  }

  if (cfg.apply_batchnorm) {
    if (cfg.mode == BankMode::per_feature)
      bn.emplace(BatchNorm::Stats::per_channel, out_channels());
    else
      bn.emplace(BatchNorm::Stats::per_cell, out_channels(), cfg.out_time);
  }
}

std::int64_t FilterBank::out_channels() const {
  const std::int64_t base = in_features * cfg.n_filters;
  return cfg.family == KernelFamily::gabor ? 2 * base : base;
}

std::vector<Tensor> FilterBank::parameters() const {
  std::vector<Tensor> out;
  for (const auto& p : kernels) {
    if (p.s.defined()) out.push_back(p.s);
    if (p.t.defined()) out.push_back(p.t);
    if (p.mu.defined()) out.push_back(p.mu);
    if (p.sigma.defined()) out.push_back(p.sigma);
  }
  if (bn) {
    out.push_back(bn->gamma);
    out.push_back(bn->beta);
  }
  return out;
}

Tensor FilterBank::forward(const Tensor& x, bool training) {
  if (x.rank() != 3 || x.dim(1) != in_features || x.dim(2) != in_time)
    throw config_error("filter_bank: expected [B," +
                       std::to_string(in_features) + "," +
                       std::to_string(in_time) + "], got " +
                       shape_str(x.shape()));
  const std::int64_t n = cfg.n_filters;
  const std::int64_t ch = in_features * n;
  const std::int64_t s_len = in_time;
  Tensor xr = n == 1 ? x : repeat_channels(x, static_cast<int>(n));
  Tensor out;

  if (cfg.mode == BankMode::per_feature) {
    switch (cfg.family) {
      case KernelFamily::identity:
        return xr;
      case KernelFamily::affine: {
        const double c0 = static_cast<double>(s_len - 1) / 2.0;
        std::vector<double> grid(static_cast<std::size_t>(s_len));
        for (std::int64_t u = 0; u < s_len; ++u)
          grid[static_cast<std::size_t>(u)] = static_cast<double>(u) - c0;
        Tensor centered = Tensor::from_data({s_len}, std::move(grid));
        std::vector<Tensor> rows;
        rows.reserve(kernels.size());
        for (const auto& p : kernels) {
          Tensor a = exp(mul(p.s, Tensor::scalar(5.0)));
          rows.push_back(add(mul(add(centered, p.t), a), Tensor::scalar(c0)));
        }
        out = warp_time(xr, stack_rows(rows));
        break;
      }
      case KernelFamily::gauss:
      case KernelFamily::lognormal: {
        std::vector<Tensor> rows;
        rows.reserve(kernels.size());
        for (const auto& p : kernels)
          rows.push_back(cfg.family == KernelFamily::gauss
                             ? gauss_kernel(p, support)
                             : lognormal_kernel(p, support));
        out = conv1d_depthwise(xr, stack_rows(rows), Padding::same_zero);
        break;
      }
      case KernelFamily::gabor: {
        std::int64_t half = 1;
        for (const auto& p : kernels)
          half = std::max(half, gabor_auto_half(p, s_len, kGaborBandwidth));
        const std::int64_t k = 2 * half + 1;
        std::vector<Tensor> re_rows, im_rows;
        re_rows.reserve(kernels.size());
        im_rows.reserve(kernels.size());
        for (const auto& p : kernels) {
          auto [re, im] = gabor_kernel_at(p, s_len, kGaborBandwidth, k);
          re_rows.push_back(re);
          im_rows.push_back(im);
        }
        Tensor o_re =
            conv1d_depthwise(xr, stack_rows(re_rows), Padding::same_zero);
        Tensor o_im =
            conv1d_depthwise(xr, stack_rows(im_rows), Padding::same_zero);
        Tensor mag = sqrt(add(add(mul(o_re, o_re), mul(o_im, o_im)),
                              Tensor::scalar(kGaborEps)));
        out = concat_channels(mag, atan2(o_im, o_re));
        break;
      }
    }
  } else {
    const std::int64_t tt = cfg.out_time;
    // collect the per-cell scalar grids [ch, tt] in (channel, tau) order
    auto field_matrix = [&](Tensor KernelParams::* field) {
      std::vector<Tensor> flat;
      flat.reserve(kernels.size());
      for (const auto& p : kernels) flat.push_back(p.*field);
      return reshape(concat_all(flat), {ch, tt});
    };
    // offset of input index i from the cell's anchor u_tau = S - T + tau;
    // positive offsets reach into the past
    auto offsets_big = [&]() {
      std::vector<double> off(static_cast<std::size_t>(ch * tt * s_len));
      for (std::int64_t c = 0; c < ch; ++c)
        for (std::int64_t tau = 0; tau < tt; ++tau) {
          const double u = static_cast<double>(s_len - tt + tau);
          double* row = off.data() + (c * tt + tau) * s_len;
          for (std::int64_t i = 0; i < s_len; ++i)
            row[i] = u - static_cast<double>(i);
        }
      return Tensor::from_data({ch, tt, s_len}, std::move(off));
    };

    switch (cfg.family) {
      case KernelFamily::identity:
        return crop_time(xr, tt);
      case KernelFamily::affine: {
        const double c0 = static_cast<double>(s_len - 1) / 2.0;
        std::vector<double> anchors(static_cast<std::size_t>(ch * tt));
        for (std::int64_t c = 0; c < ch; ++c)
          for (std::int64_t tau = 0; tau < tt; ++tau)
            anchors[static_cast<std::size_t>(c * tt + tau)] =
                static_cast<double>(s_len - tt + tau) - c0;
        Tensor u_centered = Tensor::from_data({ch, tt}, std::move(anchors));
        Tensor a = exp(mul(field_matrix(&KernelParams::s), Tensor::scalar(5.0)));
        Tensor coords = add(
            mul(add(u_centered, field_matrix(&KernelParams::t)), a),
            Tensor::scalar(c0));
        out = warp_time(xr, coords);
        break;
      }
      case KernelFamily::gauss: {
        Tensor mu = expand_last(field_matrix(&KernelParams::mu), s_len);
        Tensor width =
            expand_last(exp(field_matrix(&KernelParams::sigma)), s_len);
        Tensor z = div(sub(offsets_big(), mu), width);
        out = per_cell_dot(xr, exp(neg(mul(z, z))));
        break;
      }
      case KernelFamily::lognormal: {
        double reach = 1.0;
        for (const auto& p : kernels)
          reach = std::max(reach, (std::exp(p.s.item()) + 3.0) *
                                      (static_cast<double>(s_len - 1) +
                                       p.t.item()));
        const std::int64_t table_len =
            std::max<std::int64_t>(2, static_cast<std::int64_t>(std::ceil(reach)) + 2);
        std::vector<double> table(static_cast<std::size_t>(table_len));
        for (std::int64_t m = 0; m < table_len; ++m) {
          const double xb = static_cast<double>(m) + std::exp(-1.0);
          const double lx = std::log(xb);
          table[static_cast<std::size_t>(m)] = std::exp(-0.5 * lx * lx) / xb;
        }
        Tensor a = expand_last(add(exp(field_matrix(&KernelParams::s)),
                                   Tensor::scalar(3.0)),
                               s_len);
        Tensor t_big = expand_last(field_matrix(&KernelParams::t), s_len);
        Tensor coords = mul(add(offsets_big(), t_big), a);
        out = per_cell_dot(xr, interp_table(std::move(table), coords));
        break;
      }
      case KernelFamily::gabor: {
        const double sd = static_cast<double>(s_len);
        const double band = gabor_band_factor(kGaborBandwidth);
        Tensor omega = add(mul(sigmoid(field_matrix(&KernelParams::s)),
                               Tensor::scalar(0.5 - 2.0 / sd)),
                           Tensor::scalar(2.0 / sd));
        Tensor d = sub(offsets_big(),
                       expand_last(field_matrix(&KernelParams::mu), s_len));
        Tensor z = div(d, expand_last(mul(omega, Tensor::scalar(band)), s_len));
        Tensor envelope = exp(mul(mul(z, z), Tensor::scalar(-0.5)));
        Tensor phase = mul(
            d, expand_last(mul(omega, Tensor::scalar(2.0 * std::numbers::pi)),
                           s_len));
        Tensor o_re = per_cell_dot(xr, mul(envelope, cos(phase)));
        Tensor o_im = per_cell_dot(xr, mul(envelope, sin(phase)));
        Tensor mag = sqrt(add(add(mul(o_re, o_re), mul(o_im, o_im)),
                              Tensor::scalar(kGaborEps)));
        out = concat_channels(mag, atan2(o_im, o_re));
        break;
      }
    }
  }

  return bn ? bn->forward(out, training) : out;
}

Aggregator::Aggregator(AggregatorConfig cfg_, std::int64_t in_channels_,
                       Rng& rng)
    : cfg(cfg_), in_channels(in_channels_) {
  if (in_channels < 1)
    throw config_error("aggregator: input channels must be >= 1");
  if (cfg.n_intermediate < 0)
    throw config_error("aggregator: n_intermediate must be >= 0");
  if (!(cfg.expansion > 0.0))
    throw config_error("aggregator: expansion must be positive");
  if (cfg.out_features < 1)
    throw config_error("aggregator: out_features must be >= 1");
  const std::int64_t hidden = std::max<std::int64_t>(
      1, std::llround(cfg.expansion * static_cast<double>(in_channels)));
  std::vector<std::int64_t> widths;
  widths.push_back(in_channels);
  for (std::int64_t i = 0; i < cfg.n_intermediate; ++i) widths.push_back(hidden);
  widths.push_back(cfg.out_features);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::int64_t fan_in = widths[i], fan_out = widths[i + 1];
    w.push_back(Tensor::randn({fan_out, fan_in}, rng, 0.0,
                              1.0 / std::sqrt(static_cast<double>(fan_in)),
                              true));
    b.push_back(Tensor::zeros({fan_out}, true));
  }
}

Tensor Aggregator::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < w.size(); ++i) {
    h = linear_ct(h, w[i], b[i]);
    if (i + 1 < w.size()) h = leaky_relu(h);
  }
  return h;
}

std::vector<Tensor> Aggregator::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.push_back(w[i]);
    out.push_back(b[i]);
  }
  return out;
}

std::int64_t Aggregator::weight_count() const {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < w.size(); ++i)
    total += w[i].numel() + b[i].numel();
  return total;
}

CausalConv::CausalConv(std::int64_t in_channels, std::int64_t out_channels,
                       std::int64_t k, Rng& rng) {
  if (in_channels < 1 || out_channels < 1 || k < 1)
    throw config_error("causal_conv: invalid extent");
  w = Tensor::randn({out_channels, in_channels, k}, rng, 0.0,
                    1.0 / std::sqrt(static_cast<double>(in_channels * k)),
                    true);
}

TemporalAggregate::TemporalAggregate(TemporalConfig cfg_, std::int64_t channels_,
                                     std::int64_t in_time_, std::int64_t out_time_,
                                     Rng& rng)
    : cfg(cfg_), channels(channels_), in_time(in_time_), out_time(out_time_) {
  if (channels < 1 || in_time < 1 || out_time < 1)
    throw config_error("temporal_aggregate: invalid extent");
  if (cfg.use_causal_conv) {
    if (out_time > in_time)
      throw config_error("temporal_aggregate: causal_conv cannot extend time "
                         "from " + std::to_string(in_time) + " to " +
                         std::to_string(out_time));
    conv.emplace(channels, channels, cfg.causal_k, rng);
  } else {
    if (cfg.family == KernelFamily::gabor)
      throw config_error("temporal_aggregate: gabor doubles the channel "
                         "count and cannot keep [B,Ch,T]");
    FilterBankConfig bank_cfg;
    bank_cfg.family = cfg.family;
    bank_cfg.n_filters = 1;
    bank_cfg.mode = BankMode::per_cell;
    bank_cfg.out_time = out_time;
    bank_cfg.apply_batchnorm = cfg.apply_batchnorm;
    bank.emplace(bank_cfg, channels, in_time, rng);
  }
}

Tensor TemporalAggregate::forward(const Tensor& x, bool training) {
  if (x.rank() != 3 || x.dim(1) != channels || x.dim(2) != in_time)
    throw config_error("temporal_aggregate: expected [B," +
                       std::to_string(channels) + "," +
                       std::to_string(in_time) + "], got " +
                       shape_str(x.shape()));
  if (conv) return crop_time(conv->forward(x), out_time);
  return bank->forward(x, training);
}

std::vector<Tensor> TemporalAggregate::parameters() const {
  if (conv) return {conv->w};
  return bank->parameters();
}

}  // namespace delaynet
