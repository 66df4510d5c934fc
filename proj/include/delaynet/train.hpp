#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "delaynet/datapipe.hpp"
#include "delaynet/model.hpp"

namespace delaynet {

// mean absolute error over all elements; subgradient 0 at exact ties
Tensor mae(const Tensor& pred, const Tensor& target);

struct TrainConfig {
  double lr = 1e-3;
  std::int64_t max_epochs = 500;
  std::int64_t patience = 20;
  std::int64_t batch_size = 64;
  double grad_clip = 5.0;  // global-norm cap; <= 0 disables
  std::uint64_t seed = 0;
};

// adaptive moment estimation over a fixed parameter list
struct Adam {
  explicit Adam(std::vector<Tensor> parameters, double lr = 1e-3);
  void zero_grad();
  void step();

  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor> params;
  std::vector<std::vector<double>> m, v;
  std::int64_t t = 0;
};

// scales gradients so their global L2 norm is at most max_norm;
// returns the pre-clip norm
double clip_global_norm(std::vector<Tensor>& params, double max_norm);

struct TrainReport {
  std::vector<double> train_curve, val_curve;
  std::vector<double> epoch_seconds;
  std::int64_t best_epoch = -1;
  double best_val_mae = 0.0;
  double wall_seconds = 0.0;
};

struct BnStats {
  std::vector<double> mean, var;
};

struct Checkpoint {
  DelayNetConfig model;
  TrainConfig train;
  PipeConfig pipe;
  std::uint64_t seed = 0;  // net construction seed
  double best_val_mae = 0.0;
  std::vector<std::pair<std::string, Tensor>> arrays;
  std::vector<std::pair<std::string, BnStats>> bn_stats;
};

Checkpoint snapshot(DelayNet& net, const TrainConfig& tcfg,
                    const PipeConfig& pipe, std::uint64_t net_seed,
                    double best_val_mae);
void apply_checkpoint(const Checkpoint& c, DelayNet& net);
DelayNet restore_net(const Checkpoint& c);
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct Batch {
  Tensor x1, x2, y;
};
Batch make_batch(const std::vector<Sample>& samples,
                 const std::vector<std::size_t>& idx);

// eval-mode MAE over a sample set, in normalized units
double eval_mae(DelayNet& net, const std::vector<Sample>& set,
                std::int64_t batch_size = 64);
double zero_predictor_mae(const std::vector<Sample>& set);

// shuffled mini-batch training with early stopping; the returned checkpoint
// is the parameter snapshot at the best validation MAE
std::pair<Checkpoint, TrainReport> fit(DelayNet& net,
                                       const std::vector<Sample>& train_set,
                                       const std::vector<Sample>& val_set,
                                       const TrainConfig& cfg,
                                       const PipeConfig& pipe,
                                       std::uint64_t net_seed);

// per-epoch metrics; wall_seconds column is 0 unless real_timing is set,
// keeping same-seed reruns byte-identical
void write_metrics_csv(const TrainReport& r, const std::string& path,
                       bool real_timing = false);

}  // namespace delaynet
