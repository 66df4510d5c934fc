#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "delaynet/train.hpp"

namespace delaynet {

struct BoxStats {
  double p10 = 0.0, p25 = 0.0, median = 0.0, p75 = 0.0, p90 = 0.0;
  std::vector<double> outliers;  // values outside [p10, p90]
  std::int64_t n = 0;
};

// linear-interpolated percentiles between order statistics
BoxStats box_stats(std::vector<double> values);

struct EmaPoint {
  std::int64_t timestamp = 0;  // minutes, first raw minute of the bucket
  std::vector<double> pred, truth;  // per target column, degrees
  std::int64_t n_preds = 0;  // how many rolling predictions were folded in
};

struct EmaReport {
  double mae_celsius = 0.0;
  std::vector<EmaPoint> points;
};

// rolling evaluation over ordered overlapping samples: a fresh prediction at
// most every sample_period averaged steps, aggregated per wall-clock bucket
// with the newest prediction weighted alpha and older mass scaled by
// (1 - alpha); MAE in de-normalized degrees
EmaReport ema_rolling_eval(DelayNet& net, const std::vector<Sample>& ordered,
                           const Manifest& manifest, double alpha = 0.8,
                           std::int64_t sample_period = 16);

enum class AblationSite { low, temporal, high };

// base config with the named blocks replaced by Identity; the temporal
// identity crops to the trailing T steps
DelayNetConfig with_identity(const DelayNetConfig& base,
                             const std::vector<AblationSite>& sites);

struct AblationRow {
  std::string name;
  BoxStats stats;  // best-val MAE across trials, normalized units
};

struct AblationResult {
  std::vector<AblationRow> rows;
  double zero_mae = 0.0;  // Zero-predictor reference on the validation set
};

AblationResult ablation_grid(const DelayNetConfig& base,
                             const std::vector<std::vector<AblationSite>>& combos,
                             const std::vector<Sample>& train_set,
                             const std::vector<Sample>& val_set,
                             const TrainConfig& tcfg, const PipeConfig& pipe,
                             std::int64_t trials);

void write_box_stats_csv(const std::vector<AblationRow>& rows, double zero_mae,
                         const std::string& path);

}  // namespace delaynet
