#include "delaynet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "delaynet/ops.hpp"

namespace delaynet {

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw data_error("box_stats: empty value list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  auto pct = [&](double p) {
    const double rank = p / 100.0 * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= n) return values[n - 1];
    return values[lo] + (values[lo + 1] - values[lo]) * frac;
  };
  BoxStats b;
  b.p10 = pct(10.0);
  b.p25 = pct(25.0);
  b.median = pct(50.0);
  b.p75 = pct(75.0);
  b.p90 = pct(90.0);
  b.n = static_cast<std::int64_t>(n);
  for (double v : values)
    if (v < b.p10 || v > b.p90) b.outliers.push_back(v);
  return b;
}

EmaReport ema_rolling_eval(DelayNet& net, const std::vector<Sample>& ordered,
                           const Manifest& manifest, double alpha,
                           std::int64_t sample_period) {
  if (ordered.empty()) throw data_error("ema_rolling_eval: no samples");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw config_error("ema_rolling_eval: alpha must be in (0,1)");
  if (sample_period < 1)
    throw config_error("ema_rolling_eval: sample_period must be >= 1");
  for (std::size_t i = 1; i < ordered.size(); ++i)
    if (ordered[i].first_timestamp <= ordered[i - 1].first_timestamp)
      throw data_error("ema_rolling_eval: windows must be ordered in time");

  const std::int64_t S = manifest.pipe.S;
  const std::int64_t anchor0 = ordered.front().first_timestamp;
  struct Cell {
    std::vector<double> pred, truth;
    std::int64_t n_preds = 0;
  };
  std::map<std::int64_t, Cell> buckets;

  std::int64_t last_used = ordered.front().first_timestamp -
                           3 * sample_period;  // so the first is always used
  for (const auto& s : ordered) {
    if (s.first_timestamp - last_used < 3 * sample_period) continue;
    last_used = s.first_timestamp;
    Tensor x1 = reshape(s.x1, {1, s.x1.dim(0), s.x1.dim(1)});
    Tensor x2 = reshape(s.x2, {1, s.x2.dim(0), s.x2.dim(1)});
    Tensor out = net.forward(x1, x2, false);
    Tensor flat = reshape(out, {out.dim(1), out.dim(2)});
    Tensor pred_c = denormalize(flat, s, manifest);
    Tensor true_c = denormalize(s.y, s, manifest);
    const std::int64_t fy = pred_c.dim(0), tt = pred_c.dim(1);
    for (std::int64_t t = 0; t < tt; ++t) {
      const std::int64_t mid = s.first_timestamp + 3 * (S + t) + 1;
      std::int64_t key = mid - anchor0;
      key = (key >= 0 ? key / 3 : -((-key + 2) / 3));
      Cell& c = buckets[key];
      if (c.pred.empty()) {
        c.pred.assign(static_cast<std::size_t>(fy), 0.0);
        c.truth.assign(static_cast<std::size_t>(fy), 0.0);
      }
      for (std::int64_t f = 0; f < fy; ++f) {
        const std::size_t i =
            static_cast<std::size_t>(f * tt + t);
        const std::size_t fi = static_cast<std::size_t>(f);
        if (c.n_preds == 0)
          c.pred[fi] = pred_c.values()[i];
        else
          c.pred[fi] = (1.0 - alpha) * c.pred[fi] + alpha * pred_c.values()[i];
        c.truth[fi] = true_c.values()[i];
      }
      ++c.n_preds;
    }
  }

  EmaReport report;
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& [key, c] : buckets) {
    EmaPoint p;
    p.timestamp = anchor0 + 3 * key;
    p.pred = c.pred;
    p.truth = c.truth;
    p.n_preds = c.n_preds;
    for (std::size_t f = 0; f < c.pred.size(); ++f) {
      acc += std::abs(c.pred[f] - c.truth[f]);
      ++count;
    }
    report.points.push_back(std::move(p));
  }
  report.mae_celsius = acc / static_cast<double>(count);
  return report;
}

DelayNetConfig with_identity(const DelayNetConfig& base,
                             const std::vector<AblationSite>& sites) {
  DelayNetConfig cfg = base;
  for (AblationSite s : sites) {
    switch (s) {
      case AblationSite::low:
        cfg.filter_low = KernelFamily::identity;
        break;
      case AblationSite::high:
        cfg.filter_high = KernelFamily::identity;
        break;
      case AblationSite::temporal:
        cfg.temporal.use_causal_conv = false;
        cfg.temporal.family = KernelFamily::identity;
        break;
    }
  }
  return cfg;
}

namespace {

std::string combo_name(const std::vector<AblationSite>& sites) {
  if (sites.empty()) return "full";
  std::string name = "identity";
  for (AblationSite s : sites) {
    switch (s) {
      case AblationSite::low: name += "_low"; break;
      case AblationSite::temporal: name += "_temporal"; break;
      case AblationSite::high: name += "_high"; break;
    }
  }
  return name;
}

}  // namespace

AblationResult ablation_grid(
    const DelayNetConfig& base,
    const std::vector<std::vector<AblationSite>>& combos,
    const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
    const TrainConfig& tcfg, const PipeConfig& pipe, std::int64_t trials) {
  if (trials < 1) throw config_error("ablation_grid: trials must be >= 1");
  AblationResult result;
  result.zero_mae = zero_predictor_mae(val_set);
  for (const auto& sites : combos) {
    const DelayNetConfig cfg = with_identity(base, sites);
    std::vector<double> maes;
    for (std::int64_t trial = 0; trial < trials; ++trial) {
      const std::uint64_t net_seed =
          tcfg.seed + 7919u * static_cast<std::uint64_t>(trial + 1);
      DelayNet net(cfg, net_seed);
      TrainConfig t = tcfg;
      t.seed = net_seed + 1;
      auto [ckpt, report] = fit(net, train_set, val_set, t, pipe, net_seed);
      maes.push_back(report.best_val_mae);
    }
    result.rows.push_back({combo_name(sites), box_stats(std::move(maes))});
  }
  return result;
}

void write_box_stats_csv(const std::vector<AblationRow>& rows, double zero_mae,
                         const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw data_error("cannot write box stats csv " + path);
  std::fprintf(f, "name,p10,p25,median,p75,p90,n\n");
  for (const auto& r : rows)
    std::fprintf(f, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%lld\n", r.name.c_str(),
                 r.stats.p10, r.stats.p25, r.stats.median, r.stats.p75,
                 r.stats.p90, static_cast<long long>(r.stats.n));
  std::fprintf(f, "zero,%.17g,%.17g,%.17g,%.17g,%.17g,0\n", zero_mae, zero_mae,
               zero_mae, zero_mae, zero_mae);
  std::fclose(f);
}

}  // namespace delaynet
