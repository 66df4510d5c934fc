#include "delaynet/plantsim.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "delaynet/rng.hpp"

namespace delaynet {

namespace {

// internal plant constants (exported through PlantTruth)
constexpr double kBaseTemp = 15.0;    // unheated room equilibrium
constexpr double kLeak = 0.3;         // outside coupling in the equilibrium
constexpr double kVentLeak = 0.08;    // extra coupling while venting
constexpr double kFluidTau = 3.0;     // heating-fluid time constant
constexpr double kFluidGain = 25.0;   // fluid degrees per unit duty
constexpr double kOutsideBase = 8.0;
constexpr double kOutsideAmp = 5.0;

void check_config(const PlantConfig& cfg, std::int64_t n_steps) {
  std::string bad;
  auto flag = [&](const char* f) {
    if (!bad.empty()) bad += ", ";
    bad += f;
  };
  if (cfg.dead_time_steps < 0) flag("dead_time_steps");
  if (!(cfg.inertia_tau > 0.0)) flag("inertia_tau");
  if (cfg.outside_period_steps < 1) flag("outside_period_steps");
  if (!(cfg.noise_std >= 0.0)) flag("noise_std");
  if (!(cfg.disturbance_rate >= 0.0)) flag("disturbance_rate");
  if (n_steps < 1) flag("n_steps");
  if (!bad.empty()) throw config_error("invalid plant config, fields: " + bad);
}

}  // namespace

SeriesTable simulate(const PlantConfig& cfg, std::int64_t n_steps,
                     PlantTruth* truth) {
  check_config(cfg, n_steps);
  Rng rng(cfg.seed);
  const std::int64_t d = cfg.dead_time_steps;
  const double tau = cfg.inertia_tau;
  const std::size_t n = static_cast<std::size_t>(n_steps);

  // random piecewise-constant heater duty in [0, 1]
  std::vector<double> cmd(n);
  {
    std::size_t k = 0;
    while (k < n) {
      const double duty = rng.uniform(0.0, 1.0);
      const std::int64_t len = rng.uniform_int(20, 120);
      for (std::int64_t j = 0; j < len && k < n; ++j) cmd[k++] = duty;
    }
  }

  // venting events: unobserved step disturbances
  std::vector<char> vent(n, 0);
  std::vector<VentEvent> events;
  {
    const double p = cfg.disturbance_rate / 1000.0;
    std::size_t k = 0;
    while (k < n) {
      if (rng.uniform(0.0, 1.0) < p) {
        const std::int64_t len = rng.uniform_int(30, 90);
        VentEvent ev;
        ev.start = static_cast<std::int64_t>(k);
        ev.end = std::min(static_cast<std::int64_t>(n), ev.start + len);
        for (std::int64_t j = ev.start; j < ev.end; ++j)
          vent[static_cast<std::size_t>(j)] = 1;
        events.push_back(ev);
        k = static_cast<std::size_t>(ev.end);
      } else {
        ++k;
      }
    }
  }

  std::vector<double> outside(n), room(n), fluid(n);
  const double w = 2.0 * M_PI / static_cast<double>(cfg.outside_period_steps);
  for (std::size_t k = 0; k < n; ++k)
    outside[k] = kOutsideBase + kOutsideAmp * std::sin(w * static_cast<double>(k)) +
                 cfg.noise_std * rng.normal(0.0, 1.0);

  auto cmd_delayed = [&](std::size_t k) {
    return static_cast<std::int64_t>(k) < d ? cmd[0]
                                            : cmd[k - static_cast<std::size_t>(d)];
  };
  room[0] = 18.0;
  fluid[0] = kBaseTemp + kFluidGain * cmd[0];
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double equil = kBaseTemp + cfg.gain * cmd_delayed(k) +
                         kLeak * (outside[k] - kBaseTemp);
    const double flux = (equil - room[k]) / tau +
                        (vent[k] ? kVentLeak * (outside[k] - room[k]) : 0.0);
    room[k + 1] = room[k] + flux + cfg.noise_std * rng.normal(0.0, 1.0);
    const double fluid_equil = kBaseTemp + kFluidGain * cmd[k];
    fluid[k + 1] = fluid[k] + (fluid_equil - fluid[k]) / kFluidTau +
                   cfg.noise_std * rng.normal(0.0, 1.0);
  }

  SeriesTable t;
  t.manifest.columns = {{"room_temp", ColumnRole::target, "temperature"},
                        {"fluid_temp", ColumnRole::feature, "temperature"},
                        {"outside_temp", ColumnRole::feature, "temperature"},
                        {"heater_cmd", ColumnRole::command, "command"}};
  t.names = {"room_temp", "fluid_temp", "outside_temp", "heater_cmd"};
  t.timestamps.resize(n);
  const std::int64_t t0 = parse_minutes("2026-01-01T00:00");
  for (std::size_t k = 0; k < n; ++k)
    t.timestamps[k] = t0 + static_cast<std::int64_t>(k);
  t.data = {std::move(room), std::move(fluid), std::move(outside),
            std::move(cmd)};

  if (truth) {
    truth->dead_time_steps = d;
    truth->inertia_tau = tau;
    truth->gain = cfg.gain;
    truth->base_temp = kBaseTemp;
    truth->leak = kLeak;
    truth->vent_leak = kVentLeak;
    truth->fluid_tau = kFluidTau;
    truth->fluid_gain = kFluidGain;
    truth->outside_base = kOutsideBase;
    truth->outside_amp = kOutsideAmp;
    truth->events = std::move(events);
  }
  return t;
}

void write_truth(const PlantTruth& t, const std::string& path) {
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& e : t.events) ev.push_back({{"start", e.start}, {"end", e.end}});
  nlohmann::json j = {{"dead_time_steps", t.dead_time_steps},
                      {"inertia_tau", t.inertia_tau},
                      {"gain", t.gain},
                      {"base_temp", t.base_temp},
                      {"leak", t.leak},
                      {"vent_leak", t.vent_leak},
                      {"fluid_tau", t.fluid_tau},
                      {"fluid_gain", t.fluid_gain},
                      {"outside_base", t.outside_base},
                      {"outside_amp", t.outside_amp},
                      {"events", ev}};
  std::ofstream out(path);
  if (!out) throw data_error("cannot write truth file " + path);
  out << j.dump(2) << "\n";
}

PlantTruth read_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open truth file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("truth file " + path + ": " + e.what());
  }
  PlantTruth t;
  t.dead_time_steps = j.at("dead_time_steps").get<std::int64_t>();
  t.inertia_tau = j.at("inertia_tau").get<double>();
  t.gain = j.at("gain").get<double>();
  t.base_temp = j.at("base_temp").get<double>();
  t.leak = j.at("leak").get<double>();
  t.vent_leak = j.at("vent_leak").get<double>();
  t.fluid_tau = j.at("fluid_tau").get<double>();
  t.fluid_gain = j.at("fluid_gain").get<double>();
  t.outside_base = j.at("outside_base").get<double>();
  t.outside_amp = j.at("outside_amp").get<double>();
  for (const auto& e : j.at("events")) {
    VentEvent ev;
    ev.start = e.at("start").get<std::int64_t>();
    ev.end = e.at("end").get<std::int64_t>();
    t.events.push_back(ev);
  }
  return t;
}

}  // namespace delaynet
