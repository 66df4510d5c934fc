#include "delaynet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "delaynet/ops.hpp"

namespace delaynet {

namespace {

std::string hex(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& tok, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size())
    throw data_error(where + ": bad number '" + tok + "'");
  return v;
}

void check_train_config(const TrainConfig& cfg) {
  std::string bad;
  auto flag = [&](const char* f) {
    if (!bad.empty()) bad += ", ";
    bad += f;
  };
  if (!(cfg.lr >= 0.0)) flag("lr");
  if (cfg.max_epochs < 1) flag("max_epochs");
  if (cfg.patience < 1) flag("patience");
  if (cfg.batch_size < 1) flag("batch_size");
  if (!bad.empty()) throw config_error("invalid train config, fields: " + bad);
}

}  // namespace

Tensor mae(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw config_error("mae: shape mismatch " + shape_str(pred.shape()) +
                       " vs " + shape_str(target.shape()));
  return mean_all(abs(sub(pred, target)));
}

Adam::Adam(std::vector<Tensor> parameters, double lr_)
    : lr(lr_), params(std::move(parameters)) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.emplace_back(p.values().size(), 0.0);
    v.emplace_back(p.values().size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params) p.zero_grad();
}

void Adam::step() {
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    const auto& g = params[i].grad();
    auto& val = params[i].values();
    for (std::size_t k = 0; k < g.size(); ++k) {
      m[i][k] = beta1 * m[i][k] + (1.0 - beta1) * g[k];
      v[i][k] = beta2 * v[i][k] + (1.0 - beta2) * g[k] * g[k];
      val[k] -= lr * (m[i][k] / c1) / (std::sqrt(v[i][k] / c2) + eps);
    }
  }
}

double clip_global_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.grad()) g *= scale;
    }
  }
  return norm;
}

Batch make_batch(const std::vector<Sample>& samples,
                 const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw config_error("make_batch: empty index list");
  const Shape s1 = samples[idx[0]].x1.shape();
  const Shape s2 = samples[idx[0]].x2.shape();
  const Shape sy = samples[idx[0]].y.shape();
  const std::int64_t b = static_cast<std::int64_t>(idx.size());
  auto stack = [&](const Shape& s, auto field) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(b * s[0] * s[1]));
    for (std::size_t i : idx) {
      const Tensor& t = field(samples[i]);
      if (t.shape() != s)
        throw config_error("make_batch: inconsistent sample shapes");
      out.insert(out.end(), t.values().begin(), t.values().end());
    }
    return Tensor::from_data({b, s[0], s[1]}, std::move(out));
  };
  Batch out;
  out.x1 = stack(s1, [](const Sample& s) -> const Tensor& { return s.x1; });
  out.x2 = stack(s2, [](const Sample& s) -> const Tensor& { return s.x2; });
  out.y = stack(sy, [](const Sample& s) -> const Tensor& { return s.y; });
  return out;
}

double eval_mae(DelayNet& net, const std::vector<Sample>& set,
                std::int64_t batch_size) {
  if (set.empty()) throw config_error("eval_mae: empty sample set");
  if (batch_size < 1) throw config_error("eval_mae: batch_size must be >= 1");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < set.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start;
         i < std::min(set.size(), start + static_cast<std::size_t>(batch_size));
         ++i)
      idx.push_back(i);
    Batch b = make_batch(set, idx);
    Tensor pred = net.forward(b.x1, b.x2, false);
    const auto& p = pred.values();
    const auto& y = b.y.values();
    for (std::size_t k = 0; k < p.size(); ++k) acc += std::abs(p[k] - y[k]);
    count += p.size();
  }
  return acc / static_cast<double>(count);
}

double zero_predictor_mae(const std::vector<Sample>& set) {
  if (set.empty()) throw config_error("zero_predictor_mae: empty sample set");
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& s : set) {
    for (double v : s.y.values()) acc += std::abs(v);
    count += s.y.values().size();
  }
  return acc / static_cast<double>(count);
}

Checkpoint snapshot(DelayNet& net, const TrainConfig& tcfg,
                    const PipeConfig& pipe, std::uint64_t net_seed,
                    double best_val_mae) {
  Checkpoint c;
  c.model = net.cfg;
  c.train = tcfg;
  c.pipe = pipe;
  c.seed = net_seed;
  c.best_val_mae = best_val_mae;
  for (const auto& [name, p] : net.named_parameters()) {
    std::vector<double> copy = p.values();
    c.arrays.emplace_back(name, Tensor::from_data(p.shape(), std::move(copy)));
  }
  for (const auto& [name, bn] : net.batchnorms())
    c.bn_stats.emplace_back(name, BnStats{bn->running_mean, bn->running_var});
  return c;
}

void apply_checkpoint(const Checkpoint& c, DelayNet& net) {
  auto named = net.named_parameters();
  std::map<std::string, Tensor> live(named.begin(), named.end());
  if (named.size() != c.arrays.size())
    throw data_error("checkpoint has " + std::to_string(c.arrays.size()) +
                     " arrays, net has " + std::to_string(named.size()));
  for (const auto& [name, stored] : c.arrays) {
    auto it = live.find(name);
    if (it == live.end())
      throw data_error("checkpoint array '" + name + "' not found in net");
    if (it->second.shape() != stored.shape())
      throw data_error("checkpoint array '" + name + "' has shape " +
                       shape_str(stored.shape()) + ", net expects " +
                       shape_str(it->second.shape()));
    it->second.values() = stored.values();
  }
  auto bns = net.batchnorms();
  if (bns.size() != c.bn_stats.size())
    throw data_error("checkpoint stats count mismatch");
  std::map<std::string, BatchNorm*> live_bn(bns.begin(), bns.end());
  for (const auto& [name, st] : c.bn_stats) {
    auto it = live_bn.find(name);
    if (it == live_bn.end())
      throw data_error("checkpoint stats '" + name + "' not found in net");
    if (st.mean.size() != it->second->running_mean.size() ||
        st.var.size() != it->second->running_var.size())
      throw data_error("checkpoint stats '" + name + "' size mismatch");
    it->second->running_mean = st.mean;
    it->second->running_var = st.var;
  }
}

DelayNet restore_net(const Checkpoint& c) {
  DelayNet net(c.model, c.seed);
  apply_checkpoint(c, net);
  return net;
}

std::pair<Checkpoint, TrainReport> fit(DelayNet& net,
                                       const std::vector<Sample>& train_set,
                                       const std::vector<Sample>& val_set,
                                       const TrainConfig& cfg,
                                       const PipeConfig& pipe,
                                       std::uint64_t net_seed) {
  check_train_config(cfg);
  if (train_set.empty() || val_set.empty())
    throw config_error("fit: train and validation sets must be nonempty");

  std::vector<Tensor> params = net.parameters();
  Adam opt(params, cfg.lr);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainReport report;
  Checkpoint best;
  bool have_best = false;
  std::int64_t since_best = 0;
  // lr 0 means training is a no-op: no steps, and no batch-statistics drift
  const bool frozen = cfg.lr == 0.0;
  const auto t_start = std::chrono::steady_clock::now();
  auto t_epoch = t_start;

  for (std::int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double train_sum = 0.0;
    std::size_t train_count = 0;
    std::int64_t batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() +
              static_cast<std::ptrdiff_t>(std::min(
                  order.size(), start + static_cast<std::size_t>(cfg.batch_size))));
      if (idx.size() < 2) continue;  // batch statistics need a group
      Batch b = make_batch(train_set, idx);
      opt.zero_grad();
      Tensor loss = mae(net.forward(b.x1, b.x2, !frozen), b.y);
      const double lv = loss.values()[0];
      if (!std::isfinite(lv))
        throw numeric_error("non-finite training loss at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      if (!frozen) {
        loss.backward();
        if (cfg.grad_clip > 0.0) clip_global_norm(params, cfg.grad_clip);
        opt.step();
        for (const auto& p : params)
          for (double pv : p.values())
            if (!std::isfinite(pv))
              throw numeric_error("non-finite parameter after epoch " +
                                  std::to_string(epoch) + ", batch " +
                                  std::to_string(batch_index));
      }
      train_sum += lv * static_cast<double>(b.y.values().size());
      train_count += b.y.values().size();
      ++batch_index;
    }
    if (train_count == 0)
      throw config_error("fit: no usable batch (need at least 2 samples)");

    const double train_mae = train_sum / static_cast<double>(train_count);
    const double val_mae = eval_mae(net, val_set, cfg.batch_size);
    report.train_curve.push_back(train_mae);
    report.val_curve.push_back(val_mae);
    const auto now = std::chrono::steady_clock::now();
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(now - t_epoch).count());
    t_epoch = now;

    if (!have_best || val_mae < best.best_val_mae) {
      best = snapshot(net, cfg, pipe, net_seed, val_mae);
      report.best_epoch = epoch;
      have_best = true;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  report.best_val_mae = best.best_val_mae;
  report.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t_start)
                            .count();
  return {std::move(best), std::move(report)};
}

void write_metrics_csv(const TrainReport& r, const std::string& path,
                       bool real_timing) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw data_error("cannot write metrics csv " + path);
  std::fprintf(f, "epoch,train_mae,val_mae,wall_seconds\n");
  for (std::size_t i = 0; i < r.train_curve.size(); ++i)
    std::fprintf(f, "%zu,%.17g,%.17g,%.3f\n", i, r.train_curve[i],
                 r.val_curve[i], real_timing ? r.epoch_seconds[i] : 0.0);
  std::fclose(f);
}

namespace {

void put_model(std::FILE* f, const DelayNetConfig& m) {
  std::fprintf(f, "model.F %lld\n", static_cast<long long>(m.F));
  std::fprintf(f, "model.S %lld\n", static_cast<long long>(m.S));
  std::fprintf(f, "model.C %lld\n", static_cast<long long>(m.C));
  std::fprintf(f, "model.T %lld\n", static_cast<long long>(m.T));
  std::fprintf(f, "model.Fy %lld\n", static_cast<long long>(m.Fy));
  std::fprintf(f, "model.Fc %lld\n", static_cast<long long>(m.Fc));
  std::fprintf(f, "model.n_low %lld\n", static_cast<long long>(m.n_low));
  std::fprintf(f, "model.n_high %lld\n", static_cast<long long>(m.n_high));
  std::fprintf(f, "model.filter_low %s\n", family_name(m.filter_low).c_str());
  std::fprintf(f, "model.filter_high %s\n",
               family_name(m.filter_high).c_str());
  std::fprintf(f, "model.temporal.use_causal_conv %d\n",
               m.temporal.use_causal_conv ? 1 : 0);
  std::fprintf(f, "model.temporal.family %s\n",
               family_name(m.temporal.family).c_str());
  std::fprintf(f, "model.temporal.causal_k %lld\n",
               static_cast<long long>(m.temporal.causal_k));
  std::fprintf(f, "model.temporal.apply_batchnorm %d\n",
               m.temporal.apply_batchnorm ? 1 : 0);
  const AggregatorConfig* aggs[2] = {&m.agg_low, &m.agg_high};
  const char* names[2] = {"agg_low", "agg_high"};
  for (int i = 0; i < 2; ++i) {
    std::fprintf(f, "model.%s.n_intermediate %lld\n", names[i],
                 static_cast<long long>(aggs[i]->n_intermediate));
    std::fprintf(f, "model.%s.expansion %s\n", names[i],
                 hex(aggs[i]->expansion).c_str());
    std::fprintf(f, "model.%s.out_features %lld\n", names[i],
                 static_cast<long long>(aggs[i]->out_features));
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw data_error("cannot write checkpoint " + path);
  std::fprintf(f, "delaynet checkpoint 1\n");
  std::fprintf(f, "seed %llu\n", static_cast<unsigned long long>(c.seed));
  std::fprintf(f, "best_val_mae %s\n", hex(c.best_val_mae).c_str());
  put_model(f, c.model);
  std::fprintf(f, "train.lr %s\n", hex(c.train.lr).c_str());
  std::fprintf(f, "train.max_epochs %lld\n",
               static_cast<long long>(c.train.max_epochs));
  std::fprintf(f, "train.patience %lld\n",
               static_cast<long long>(c.train.patience));
  std::fprintf(f, "train.batch_size %lld\n",
               static_cast<long long>(c.train.batch_size));
  std::fprintf(f, "train.grad_clip %s\n", hex(c.train.grad_clip).c_str());
  std::fprintf(f, "train.seed %llu\n",
               static_cast<unsigned long long>(c.train.seed));
  std::fprintf(f, "pipe.window_minutes %lld\n",
               static_cast<long long>(c.pipe.window_minutes));
  std::fprintf(f, "pipe.stride_minutes %lld\n",
               static_cast<long long>(c.pipe.stride_minutes));
  std::fprintf(f, "pipe.S %lld\n", static_cast<long long>(c.pipe.S));
  std::fprintf(f, "pipe.T %lld\n", static_cast<long long>(c.pipe.T));
  std::fprintf(f, "pipe.anchor_fraction %s\n",
               hex(c.pipe.anchor_fraction).c_str());
  std::fprintf(f, "pipe.max_gap_minutes %lld\n",
               static_cast<long long>(c.pipe.max_gap_minutes));
  std::fprintf(f, "arrays %zu\n", c.arrays.size());
  for (const auto& [name, t] : c.arrays) {
    std::fprintf(f, "array %s %d", name.c_str(), t.rank());
    for (int i = 0; i < t.rank(); ++i)
      std::fprintf(f, " %lld", static_cast<long long>(t.dim(i)));
    std::fprintf(f, " %zu", t.values().size());
    for (double v : t.values()) std::fprintf(f, " %a", v);
    std::fputc('\n', f);
  }
  std::fprintf(f, "bnstats %zu\n", c.bn_stats.size());
  for (const auto& [name, st] : c.bn_stats) {
    std::fprintf(f, "bn %s %zu", name.c_str(), st.mean.size());
    for (double v : st.mean) std::fprintf(f, " %a", v);
    for (double v : st.var) std::fprintf(f, " %a", v);
    std::fputc('\n', f);
  }
  std::fprintf(f, "end\n");
  std::fclose(f);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line) || line != "delaynet checkpoint 1")
    throw data_error(path + ": not a version-1 checkpoint");
  Checkpoint c;
  auto as_int = [&](const std::string& tok) {
    try {
      return static_cast<std::int64_t>(std::stoll(tok));
    } catch (const std::exception&) {
      throw data_error(path + ": bad integer '" + tok + "'");
    }
  };
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "arrays") break;
    std::string val;
    ls >> val;
    if (key == "seed")
      c.seed = static_cast<std::uint64_t>(as_int(val));
    else if (key == "best_val_mae")
      c.best_val_mae = parse_double(val, path);
    else if (key == "model.F")
      c.model.F = as_int(val);
    else if (key == "model.S")
      c.model.S = as_int(val);
    else if (key == "model.C")
      c.model.C = as_int(val);
    else if (key == "model.T")
      c.model.T = as_int(val);
    else if (key == "model.Fy")
      c.model.Fy = as_int(val);
    else if (key == "model.Fc")
      c.model.Fc = as_int(val);
    else if (key == "model.n_low")
      c.model.n_low = as_int(val);
    else if (key == "model.n_high")
      c.model.n_high = as_int(val);
    else if (key == "model.filter_low")
      c.model.filter_low = family_from_name(val);
    else if (key == "model.filter_high")
      c.model.filter_high = family_from_name(val);
    else if (key == "model.temporal.use_causal_conv")
      c.model.temporal.use_causal_conv = as_int(val) != 0;
    else if (key == "model.temporal.family")
      c.model.temporal.family = family_from_name(val);
    else if (key == "model.temporal.causal_k")
      c.model.temporal.causal_k = as_int(val);
    else if (key == "model.temporal.apply_batchnorm")
      c.model.temporal.apply_batchnorm = as_int(val) != 0;
    else if (key == "model.agg_low.n_intermediate")
      c.model.agg_low.n_intermediate = as_int(val);
    else if (key == "model.agg_low.expansion")
      c.model.agg_low.expansion = parse_double(val, path);
    else if (key == "model.agg_low.out_features")
      c.model.agg_low.out_features = as_int(val);
    else if (key == "model.agg_high.n_intermediate")
      c.model.agg_high.n_intermediate = as_int(val);
    else if (key == "model.agg_high.expansion")
      c.model.agg_high.expansion = parse_double(val, path);
    else if (key == "model.agg_high.out_features")
      c.model.agg_high.out_features = as_int(val);
    else if (key == "train.lr")
      c.train.lr = parse_double(val, path);
    else if (key == "train.max_epochs")
      c.train.max_epochs = as_int(val);
    else if (key == "train.patience")
      c.train.patience = as_int(val);
    else if (key == "train.batch_size")
      c.train.batch_size = as_int(val);
    else if (key == "train.grad_clip")
      c.train.grad_clip = parse_double(val, path);
    else if (key == "train.seed")
      c.train.seed = static_cast<std::uint64_t>(as_int(val));
    else if (key == "pipe.window_minutes")
      c.pipe.window_minutes = as_int(val);
    else if (key == "pipe.stride_minutes")
      c.pipe.stride_minutes = as_int(val);
    else if (key == "pipe.S")
      c.pipe.S = as_int(val);
    else if (key == "pipe.T")
      c.pipe.T = as_int(val);
    else if (key == "pipe.anchor_fraction")
      c.pipe.anchor_fraction = parse_double(val, path);
    else if (key == "pipe.max_gap_minutes")
      c.pipe.max_gap_minutes = as_int(val);
    else
      throw data_error(path + ": unknown checkpoint key '" + key + "'");
  }
  std::istringstream head(line);
  std::string tag;
  std::size_t n_arrays = 0;
  head >> tag >> n_arrays;
  if (tag != "arrays") throw data_error(path + ": missing arrays section");
  for (std::size_t i = 0; i < n_arrays; ++i) {
    if (!std::getline(in, line))
      throw data_error(path + ": truncated arrays section");
    std::istringstream ls(line);
    std::string atag, name;
    int rank = 0;
    ls >> atag >> name >> rank;
    if (atag != "array" || rank < 0 || rank > 4)
      throw data_error(path + ": bad array line");
    Shape shape;
    for (int r = 0; r < rank; ++r) {
      std::int64_t d = 0;
      ls >> d;
      shape.push_back(d);
    }
    std::size_t count = 0;
    ls >> count;
    std::vector<double> vals(count);
    for (auto& v : vals) {
      std::string tok;
      if (!(ls >> tok)) throw data_error(path + ": short array " + name);
      v = parse_double(tok, path);
    }
    c.arrays.emplace_back(name, Tensor::from_data(shape, std::move(vals)));
  }
  if (!std::getline(in, line))
    throw data_error(path + ": missing bnstats section");
  std::istringstream bh(line);
  std::size_t n_bn = 0;
  bh >> tag >> n_bn;
  if (tag != "bnstats") throw data_error(path + ": missing bnstats section");
  for (std::size_t i = 0; i < n_bn; ++i) {
    if (!std::getline(in, line))
      throw data_error(path + ": truncated bnstats section");
    std::istringstream ls(line);
    std::string btag, name;
    std::size_t count = 0;
    ls >> btag >> name >> count;
    if (btag != "bn") throw data_error(path + ": bad bn line");
    BnStats st;
    st.mean.resize(count);
    st.var.resize(count);
    auto get = [&](double& v) {
      std::string tok;
      if (!(ls >> tok)) throw data_error(path + ": short bn line " + name);
      v = parse_double(tok, path);
    };
    for (auto& v : st.mean) get(v);
    for (auto& v : st.var) get(v);
    c.bn_stats.emplace_back(name, std::move(st));
  }
  if (!std::getline(in, line) || line != "end")
    throw data_error(path + ": missing end marker");
  return c;
}

}  // namespace delaynet
