// Command-line surface: plant simulation, sample preparation, training,
// rolling evaluation, ablation grid and the gradient self-check. All file
// outputs are byte-stable across reruns with the same seed; wall-clock
// timing only reaches the metrics CSV behind --real-timing.

#include <CLI11.hpp>
#include <json.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "delaynet/datapipe.hpp"
#include "delaynet/error.hpp"
#include "delaynet/eval.hpp"
#include "delaynet/gradcheck_suite.hpp"
#include "delaynet/model.hpp"
#include "delaynet/ops.hpp"
#include "delaynet/plantsim.hpp"
#include "delaynet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace delaynet;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) known = known || it.key() == k;
    if (!known)
      throw config_error("unknown key '" + it.key() + "' in " + where);
  }
}

double get_num(const json& s, const char* k, double dflt) {
  if (!s.contains(k)) return dflt;
  if (!s.at(k).is_number())
    throw config_error(std::string("key '") + k + "' must be a number");
  return s.at(k).get<double>();
}

std::int64_t get_int(const json& s, const char* k, std::int64_t dflt) {
  if (!s.contains(k)) return dflt;
  if (!s.at(k).is_number_integer())
    throw config_error(std::string("key '") + k + "' must be an integer");
  return s.at(k).get<std::int64_t>();
}

std::uint64_t get_seed(const json& s, const char* k, std::uint64_t dflt) {
  if (!s.contains(k)) return dflt;
  if (!s.at(k).is_number_integer() || s.at(k).get<std::int64_t>() < 0)
    throw config_error(std::string("key '") + k +
                       "' must be a non-negative integer");
  return s.at(k).get<std::uint64_t>();
}

bool get_bool(const json& s, const char* k, bool dflt) {
  if (!s.contains(k)) return dflt;
  if (!s.at(k).is_boolean())
    throw config_error(std::string("key '") + k + "' must be a boolean");
  return s.at(k).get<bool>();
}

std::string get_str(const json& s, const char* k, const std::string& dflt) {
  if (!s.contains(k)) return dflt;
  if (!s.at(k).is_string())
    throw config_error(std::string("key '") + k + "' must be a string");
  return s.at(k).get<std::string>();
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw config_error("cannot read config " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw config_error("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw config_error("config root must be an object");
  check_keys(j, {"model", "train", "plant", "pipe", "cli"}, "config");
  return j;
}

json section(const json& cfg, const char* name) {
  if (!cfg.contains(name)) return json::object();
  if (!cfg.at(name).is_object())
    throw config_error(std::string("config section '") + name +
                       "' must be an object");
  return cfg.at(name);
}

AggregatorConfig agg_from_json(const json& s, AggregatorConfig base,
                               const std::string& where) {
  // out_features is accepted for symmetry but re-derived at build time
  check_keys(s, {"n_intermediate", "expansion", "out_features"}, where);
  base.n_intermediate = get_int(s, "n_intermediate", base.n_intermediate);
  base.expansion = get_num(s, "expansion", base.expansion);
  base.out_features = get_int(s, "out_features", base.out_features);
  return base;
}

DelayNetConfig model_from_json(const json& cfg) {
  const json s = section(cfg, "model");
  check_keys(s,
             {"name", "F", "S", "C", "T", "Fy", "Fc", "n_low", "n_high",
              "filter_low", "filter_high", "temporal", "agg_low", "agg_high"},
             "model");
  DelayNetConfig c;
  if (s.contains("name")) c = named_config(get_str(s, "name", ""));
  c.F = get_int(s, "F", c.F);
  c.S = get_int(s, "S", c.S);
  c.C = get_int(s, "C", c.C);
  c.T = get_int(s, "T", c.T);
  c.Fy = get_int(s, "Fy", c.Fy);
  c.Fc = get_int(s, "Fc", c.Fc);
  c.n_low = get_int(s, "n_low", c.n_low);
  c.n_high = get_int(s, "n_high", c.n_high);
  if (s.contains("filter_low"))
    c.filter_low = family_from_name(get_str(s, "filter_low", ""));
  if (s.contains("filter_high"))
    c.filter_high = family_from_name(get_str(s, "filter_high", ""));
  if (s.contains("temporal")) {
    const json t = s.at("temporal");
    check_keys(t, {"use_causal_conv", "family", "causal_k", "apply_batchnorm"},
               "model.temporal");
    c.temporal.use_causal_conv =
        get_bool(t, "use_causal_conv", c.temporal.use_causal_conv);
    if (t.contains("family"))
      c.temporal.family = family_from_name(get_str(t, "family", ""));
    c.temporal.causal_k = get_int(t, "causal_k", c.temporal.causal_k);
    c.temporal.apply_batchnorm =
        get_bool(t, "apply_batchnorm", c.temporal.apply_batchnorm);
  }
  if (s.contains("agg_low"))
    c.agg_low = agg_from_json(s.at("agg_low"), c.agg_low, "model.agg_low");
  if (s.contains("agg_high"))
    c.agg_high = agg_from_json(s.at("agg_high"), c.agg_high, "model.agg_high");
  return c;
}

TrainConfig train_from_json(const json& cfg) {
  const json s = section(cfg, "train");
  check_keys(s, {"lr", "max_epochs", "patience", "batch_size", "grad_clip",
                 "seed"},
             "train");
  TrainConfig t;
  t.lr = get_num(s, "lr", t.lr);
  t.max_epochs = get_int(s, "max_epochs", t.max_epochs);
  t.patience = get_int(s, "patience", t.patience);
  t.batch_size = get_int(s, "batch_size", t.batch_size);
  t.grad_clip = get_num(s, "grad_clip", t.grad_clip);
  t.seed = get_seed(s, "seed", t.seed);
  return t;
}

PlantConfig plant_from_json(const json& cfg) {
  const json s = section(cfg, "plant");
  check_keys(s,
             {"dead_time_steps", "inertia_tau", "gain", "outside_period_steps",
              "noise_std", "disturbance_rate", "seed"},
             "plant");
  PlantConfig p;
  p.dead_time_steps = get_int(s, "dead_time_steps", p.dead_time_steps);
  p.inertia_tau = get_num(s, "inertia_tau", p.inertia_tau);
  p.gain = get_num(s, "gain", p.gain);
  p.outside_period_steps =
      get_int(s, "outside_period_steps", p.outside_period_steps);
  p.noise_std = get_num(s, "noise_std", p.noise_std);
  p.disturbance_rate = get_num(s, "disturbance_rate", p.disturbance_rate);
  p.seed = get_seed(s, "seed", p.seed);
  return p;
}

PipeConfig pipe_from_json(const json& cfg, PipeConfig base) {
  const json s = section(cfg, "pipe");
  check_keys(s,
             {"window_minutes", "stride_minutes", "S", "T", "anchor_fraction",
              "max_gap_minutes"},
             "pipe");
  base.window_minutes = get_int(s, "window_minutes", base.window_minutes);
  base.stride_minutes = get_int(s, "stride_minutes", base.stride_minutes);
  base.S = get_int(s, "S", base.S);
  base.T = get_int(s, "T", base.T);
  base.anchor_fraction = get_num(s, "anchor_fraction", base.anchor_fraction);
  base.max_gap_minutes = get_int(s, "max_gap_minutes", base.max_gap_minutes);
  return base;
}

// knobs that belong to the command-line workflow rather than any one struct
struct CliDefaults {
  std::int64_t steps = 20000;
  double val_fraction = 0.25;
  double alpha = 0.8;
  std::int64_t sample_period = 16;
  std::int64_t trials = 5;
};

CliDefaults cli_from_json(const json& cfg) {
  const json s = section(cfg, "cli");
  check_keys(s, {"steps", "val_fraction", "alpha", "sample_period", "trials"},
             "cli");
  CliDefaults d;
  d.steps = get_int(s, "steps", d.steps);
  d.val_fraction = get_num(s, "val_fraction", d.val_fraction);
  d.alpha = get_num(s, "alpha", d.alpha);
  d.sample_period = get_int(s, "sample_period", d.sample_period);
  d.trials = get_int(s, "trials", d.trials);
  return d;
}

// network geometry always comes from the data; explicit config values may
// only confirm it
void adapt_geometry(DelayNetConfig& c, const json& cfg, const Manifest& m) {
  std::int64_t n_cmd = 0, n_tgt = 0;
  for (const auto& col : m.columns) {
    if (col.role == ColumnRole::command) ++n_cmd;
    if (col.role == ColumnRole::target) ++n_tgt;
  }
  const json s = section(cfg, "model");
  auto enforce = [&](const char* k, std::int64_t derived) {
    if (s.contains(k) && get_int(s, k, derived) != derived)
      throw config_error(std::string("model.") + k + "=" +
                         std::to_string(get_int(s, k, derived)) +
                         " conflicts with the data (wants " +
                         std::to_string(derived) + ")");
  };
  enforce("F", static_cast<std::int64_t>(m.columns.size()));
  enforce("C", n_cmd);
  enforce("Fy", n_tgt);
  enforce("S", m.pipe.S);
  enforce("T", m.pipe.T);
  c.F = static_cast<std::int64_t>(m.columns.size());
  c.C = n_cmd;
  c.Fy = n_tgt;
  c.S = m.pipe.S;
  c.T = m.pipe.T;
}

std::string out_path(const std::string& dir, const char* name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

int run_simulate(const std::string& config_path, const std::string& out,
                 bool seed_set, std::uint64_t seed, bool steps_set,
                 std::int64_t steps) {
  const json cfg = load_config(config_path);
  PlantConfig plant = plant_from_json(cfg);
  if (seed_set) plant.seed = seed;
  const std::int64_t n = steps_set ? steps : cli_from_json(cfg).steps;

  PlantTruth truth;
  SeriesTable t = simulate(plant, n, &truth);
  t.manifest.pipe = pipe_from_json(cfg, t.manifest.pipe);
  write_series_csv(t, out_path(out, "series.csv"));
  write_manifest(t.manifest, out_path(out, "manifest.json"));
  write_truth(truth, out_path(out, "truth.json"));
  std::printf("wrote %s: %lld rows, %zu columns (dead time %lld min)\n",
              out_path(out, "series.csv").c_str(), static_cast<long long>(n),
              t.names.size(), static_cast<long long>(truth.dead_time_steps));
  return 0;
}

int run_prepare(const std::string& config_path, const std::string& out,
                const std::string& data, const std::string& manifest_path,
                const std::string& boundary) {
  const json cfg = load_config(config_path);
  Manifest m = read_manifest(manifest_path);
  m.pipe = pipe_from_json(cfg, m.pipe);
  SeriesTable t = read_series_csv(data, m);
  std::vector<Sample> samples = prepare_samples(t);
  if (samples.empty()) throw data_error("no usable windows in " + data);

  std::int64_t split_at = 0;
  if (!boundary.empty()) {
    split_at = parse_minutes(boundary);
  } else {
    const double f = cli_from_json(cfg).val_fraction;
    if (!(f > 0.0 && f < 1.0))
      throw config_error("cli.val_fraction must lie in (0,1)");
    const std::int64_t lo = t.timestamps.front(), hi = t.timestamps.back();
    split_at = lo + static_cast<std::int64_t>(
                        std::llround((1.0 - f) * static_cast<double>(hi - lo)));
  }
  auto [train_set, val_set] = split_train_val(samples, split_at);
  if (train_set.empty() || val_set.empty())
    throw data_error("split at " + format_minutes(split_at) +
                     " leaves an empty side (train " +
                     std::to_string(train_set.size()) + ", val " +
                     std::to_string(val_set.size()) + ")");
  write_sample_cache(train_set, m, out_path(out, "train.samples"));
  write_sample_cache(val_set, m, out_path(out, "val.samples"));
  write_manifest(m, out_path(out, "manifest.json"));
  std::printf("%zu samples -> %zu train / %zu val (boundary %s)\n",
              samples.size(), train_set.size(), val_set.size(),
              format_minutes(split_at).c_str());
  return 0;
}

int run_train(const std::string& config_path, const std::string& out,
              const std::string& train_path, const std::string& val_path,
              bool seed_set, std::uint64_t seed, bool real_timing) {
  const json cfg = load_config(config_path);
  Manifest m;
  std::vector<Sample> train_set = read_sample_cache(train_path, &m);
  std::vector<Sample> val_set = read_sample_cache(val_path);
  TrainConfig tcfg = train_from_json(cfg);
  if (seed_set) tcfg.seed = seed;
  DelayNetConfig mcfg = model_from_json(cfg);
  adapt_geometry(mcfg, cfg, m);

  DelayNet net(mcfg, tcfg.seed);
  std::printf("training %lld parameters on %zu samples, validating on %zu\n",
              static_cast<long long>(net.param_count()), train_set.size(),
              val_set.size());
  auto [ckpt, report] = fit(net, train_set, val_set, tcfg, m.pipe, tcfg.seed);
  save_checkpoint(ckpt, out_path(out, "checkpoint.txt"));
  write_metrics_csv(report, out_path(out, "metrics.csv"), real_timing);
  std::printf("best val mae %.6f at epoch %lld (%zu epochs run)\n",
              report.best_val_mae, static_cast<long long>(report.best_epoch),
              report.val_curve.size());
  return 0;
}

int run_eval(const std::string& config_path, const std::string& out,
             const std::string& ckpt_path, const std::string& data,
             bool alpha_set, double alpha) {
  const json cfg = load_config(config_path);
  const CliDefaults d = cli_from_json(cfg);
  const double a = alpha_set ? alpha : d.alpha;
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  DelayNet net = restore_net(ckpt);
  Manifest m;
  std::vector<Sample> samples = read_sample_cache(data, &m);
  if (samples.empty()) throw data_error("no samples in " + data);

  std::vector<std::string> targets;
  for (const auto& col : m.columns)
    if (col.role == ColumnRole::target) targets.push_back(col.name);

  // per-sample de-normalized errors against the zero-prediction reference
  std::vector<double> maes;
  double zero_sum = 0.0;
  std::FILE* sf = std::fopen(out_path(out, "samples.csv").c_str(), "w");
  if (!sf) throw data_error("cannot write samples.csv");
  std::fprintf(sf, "index,first,last,mae_c,zero_mae_c\n");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    Tensor x1 = reshape(s.x1, {1, s.x1.dim(0), s.x1.dim(1)});
    Tensor x2 = reshape(s.x2, {1, s.x2.dim(0), s.x2.dim(1)});
    Tensor outp = net.forward(x1, x2, false);
    Tensor pred_c =
        denormalize(reshape(outp, {outp.dim(1), outp.dim(2)}), s, m);
    Tensor true_c = denormalize(s.y, s, m);
    Tensor zero_c =
        denormalize(Tensor::zeros({s.y.dim(0), s.y.dim(1)}), s, m);
    double mae_c = 0.0, zero_mae = 0.0;
    for (std::int64_t j = 0; j < true_c.numel(); ++j) {
      mae_c += std::abs(pred_c.values()[j] - true_c.values()[j]);
      zero_mae += std::abs(zero_c.values()[j] - true_c.values()[j]);
    }
    mae_c /= static_cast<double>(true_c.numel());
    zero_mae /= static_cast<double>(true_c.numel());
    maes.push_back(mae_c);
    zero_sum += zero_mae;
    std::fprintf(sf, "%zu,%s,%s,%.17g,%.17g\n", i,
                 format_minutes(s.first_timestamp).c_str(),
                 format_minutes(s.last_timestamp).c_str(), mae_c, zero_mae);
  }
  std::fclose(sf);
  const double zero_ref = zero_sum / static_cast<double>(samples.size());
  write_box_stats_csv({{"sample_mae", box_stats(maes)}}, zero_ref,
                      out_path(out, "box.csv"));

  EmaReport ema = ema_rolling_eval(net, samples, m, a, d.sample_period);
  std::FILE* ef = std::fopen(out_path(out, "ema.csv").c_str(), "w");
  if (!ef) throw data_error("cannot write ema.csv");
  std::fprintf(ef, "timestamp,n_preds");
  for (const auto& name : targets)
    std::fprintf(ef, ",pred_%s,true_%s", name.c_str(), name.c_str());
  std::fprintf(ef, "\n");
  for (const EmaPoint& p : ema.points) {
    std::fprintf(ef, "%s,%lld", format_minutes(p.timestamp).c_str(),
                 static_cast<long long>(p.n_preds));
    for (std::size_t j = 0; j < p.pred.size(); ++j)
      std::fprintf(ef, ",%.17g,%.17g", p.pred[j], p.truth[j]);
    std::fprintf(ef, "\n");
  }
  std::fclose(ef);
  std::printf(
      "rolling mae %.6f C over %zu buckets (alpha %.3g); zero baseline %.6f "
      "C\n",
      ema.mae_celsius, ema.points.size(), a, zero_ref);
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& out,
               const std::string& train_path, const std::string& val_path,
               bool seed_set, std::uint64_t seed, bool trials_set,
               std::int64_t trials) {
  const json cfg = load_config(config_path);
  Manifest m;
  std::vector<Sample> train_set = read_sample_cache(train_path, &m);
  std::vector<Sample> val_set = read_sample_cache(val_path);
  TrainConfig tcfg = train_from_json(cfg);
  if (seed_set) tcfg.seed = seed;
  DelayNetConfig base = model_from_json(cfg);
  adapt_geometry(base, cfg, m);
  const std::int64_t n_trials = trials_set ? trials : cli_from_json(cfg).trials;

  const std::vector<std::vector<AblationSite>> combos = {
      {},
      {AblationSite::low},
      {AblationSite::temporal},
      {AblationSite::high},
      {AblationSite::low, AblationSite::temporal, AblationSite::high}};
  AblationResult res =
      ablation_grid(base, combos, train_set, val_set, tcfg, m.pipe, n_trials);
  write_box_stats_csv(res.rows, res.zero_mae, out_path(out, "ablation.csv"));
  for (const AblationRow& r : res.rows)
    std::printf("%-28s median %.6f  (p25 %.6f, p75 %.6f, n %lld)\n",
                r.name.c_str(), r.stats.median, r.stats.p25, r.stats.p75,
                static_cast<long long>(r.stats.n));
  std::printf("%-28s %.6f\n", "zero", res.zero_mae);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"delaynet: delay-filter network toolkit for slow thermal "
               "system identification"};
  app.require_subcommand(1);
  int rc = 0;

  std::string config_path, out = ".";
  std::uint64_t seed = 0;
  std::string data, manifest_path, boundary, train_path, val_path, ckpt_path;
  std::int64_t steps = 20000, trials = 5;
  double alpha = 0.8;
  bool real_timing = false;

  auto common = [&](CLI::App* sub, bool with_seed) {
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--out", out, "output directory (default .)");
    if (with_seed) sub->add_option("--seed", seed, "override the config seed");
    return sub;
  };

  CLI::App* sim = common(app.add_subcommand(
                             "simulate", "generate a synthetic plant series"),
                         true);
  sim->add_option("--steps", steps, "series length in minutes");
  sim->callback([&]() {
    rc = run_simulate(config_path, out, sim->count("--seed") > 0, seed,
                      sim->count("--steps") > 0, steps);
  });

  CLI::App* prep = common(
      app.add_subcommand("prepare", "window, normalize and split a series"),
      false);
  prep->add_option("--data", data, "input series CSV")->required();
  prep->add_option("--manifest", manifest_path, "manifest JSON")->required();
  prep->add_option("--boundary", boundary,
                   "train/val boundary timestamp (YYYY-MM-DDTHH:MM)");
  prep->callback([&]() {
    rc = run_prepare(config_path, out, data, manifest_path, boundary);
  });

  CLI::App* tr = common(
      app.add_subcommand("train", "fit a network on prepared samples"), true);
  tr->add_option("--train", train_path, "training sample cache")->required();
  tr->add_option("--val", val_path, "validation sample cache")->required();
  tr->add_flag("--real-timing", real_timing,
               "record wall-clock seconds in metrics.csv");
  tr->callback([&]() {
    rc = run_train(config_path, out, train_path, val_path,
                   tr->count("--seed") > 0, seed, real_timing);
  });

  CLI::App* ev = common(
      app.add_subcommand("eval", "rolling evaluation of a checkpoint"), false);
  ev->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  ev->add_option("--data", data, "sample cache to evaluate")->required();
  ev->add_option("--alpha", alpha, "EMA decay, newest prediction weight");
  ev->callback([&]() {
    rc = run_eval(config_path, out, ckpt_path, data, ev->count("--alpha") > 0,
                  alpha);
  });

  CLI::App* ab = common(
      app.add_subcommand("ablate", "identity-replacement ablation grid"),
      true);
  ab->add_option("--train", train_path, "training sample cache")->required();
  ab->add_option("--val", val_path, "validation sample cache")->required();
  ab->add_option("--trials", trials, "retrainings per configuration");
  ab->callback([&]() {
    rc = run_ablate(config_path, out, train_path, val_path,
                    ab->count("--seed") > 0, seed, ab->count("--trials") > 0,
                    trials);
  });

  CLI::App* gc = app.add_subcommand(
      "gradcheck", "finite-difference check of every block's gradients");
  gc->callback([&]() {
    GradcheckReport rep = run_gradcheck_suite(std::cout);
    rc = rep.pass ? 0 : 2;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems map to the config-error code
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 2;
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const data_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 1;
  } catch (const state_error& e) {
    std::fprintf(stderr, "state error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
