#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "delaynet/tensor.hpp"

namespace delaynet {

enum class ColumnRole { feature, command, target };
const char* role_name(ColumnRole r);
ColumnRole role_from_name(const std::string& s);

// preprocessing constants; window_minutes/3 must equal S+T
struct PipeConfig {
  std::int64_t window_minutes = 480;
  std::int64_t stride_minutes = 50;
  std::int64_t S = 100;
  std::int64_t T = 60;
  double anchor_fraction = 0.2;
  std::int64_t max_gap_minutes = 20;
};

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::feature;
  std::string group;
};

struct Manifest {
  std::vector<ColumnSpec> columns;  // order defines the x1 row order
  PipeConfig pipe;
};

// minute-resolution series; data[col][row], NaN marks missing
struct SeriesTable {
  std::vector<std::int64_t> timestamps;  // minutes since epoch, increasing
  std::vector<std::string> names;
  std::vector<std::vector<double>> data;
  Manifest manifest;
};

bool is_missing(double v);
std::int64_t parse_minutes(const std::string& iso);  // "2026-01-31T07:45"
std::string format_minutes(std::int64_t minutes);

Manifest read_manifest(const std::string& path);
void write_manifest(const Manifest& m, const std::string& path);
SeriesTable read_series_csv(const std::string& path, const Manifest& manifest);
void write_series_csv(const SeriesTable& t, const std::string& path);

// linear fill of missing runs strictly shorter than max_gap_minutes
std::vector<double> interpolate_gaps(const std::vector<double>& col,
                                     std::int64_t max_gap_minutes);

struct RawWindow {
  std::int64_t first_timestamp = 0;
  std::int64_t last_timestamp = 0;
  std::vector<std::vector<double>> data;  // [col][window_minutes]
};

// overlapping windows on the contiguous minute grid; any window touching a
// missing value is dropped
std::vector<RawWindow> make_windows(const SeriesTable& t,
                                    std::int64_t window_minutes,
                                    std::int64_t stride_minutes);

// non-overlapping mean of consecutive triples, per column
std::vector<std::vector<double>> average_triples(
    const std::vector<std::vector<double>>& w);

struct GroupStats {
  double mean = 0.0;
  double stdev = 1.0;  // floored value actually used as divisor
};

struct Sample {
  Tensor x1;  // [F,S]  all columns, known past
  Tensor x2;  // [C,T]  command columns, future
  Tensor y;   // [Fy,T] target columns, future
  double anchor = 0.0;
  std::vector<std::pair<std::string, GroupStats>> group_stats;
  std::int64_t first_timestamp = 0;
  std::int64_t last_timestamp = 0;
};

// group normalization over the known past, then target-anchor subtraction
// from every column of the target-bearing groups
Sample normalize_sample(const RawWindow& averaged, const Manifest& manifest);

// invert anchor subtraction, then group normalization, for target columns
Tensor denormalize(const Tensor& pred, const Sample& s, const Manifest& manifest);

std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(
    const std::vector<Sample>& samples, std::int64_t boundary_timestamp);

// full pipeline: reindex to the minute grid, fill short gaps, window,
// average triples, normalize
std::vector<Sample> prepare_samples(const SeriesTable& raw);

void write_sample_cache(const std::vector<Sample>& samples, const Manifest& m,
                        const std::string& path);
std::vector<Sample> read_sample_cache(const std::string& path,
                                      Manifest* manifest_out = nullptr);

}  // namespace delaynet
