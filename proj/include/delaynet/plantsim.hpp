#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "delaynet/datapipe.hpp"

namespace delaynet {

// delayed-thermal-plant generator; one step = one minute
struct PlantConfig {
  std::int64_t dead_time_steps = 8;  // command-to-effect delay d
  double inertia_tau = 40.0;         // first-order time constant, steps
  double gain = 10.0;                // degrees per unit heater duty
  std::int64_t outside_period_steps = 1440;
  double noise_std = 0.02;
  double disturbance_rate = 2.0;  // venting events per 1000 steps
  std::uint64_t seed = 0;
};

struct VentEvent {
  std::int64_t start = 0;  // [start, end)
  std::int64_t end = 0;
};

// everything needed to recompute the modeled fluxes from the exported series
struct PlantTruth {
  std::int64_t dead_time_steps = 0;
  double inertia_tau = 0.0;
  double gain = 0.0;
  double base_temp = 0.0;
  double leak = 0.0;
  double vent_leak = 0.0;
  double fluid_tau = 0.0;
  double fluid_gain = 0.0;
  double outside_base = 0.0;
  double outside_amp = 0.0;
  std::vector<VentEvent> events;
};

// columns: room_temp (target), fluid_temp, outside_temp (features),
// heater_cmd (command); manifest groups: temperature + command
SeriesTable simulate(const PlantConfig& cfg, std::int64_t n_steps,
                     PlantTruth* truth = nullptr);

void write_truth(const PlantTruth& t, const std::string& path);
PlantTruth read_truth(const std::string& path);

}  // namespace delaynet
