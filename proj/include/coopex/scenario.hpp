#pragma once

// Scenario configuration and household data: CSV ingestion, a seeded
// synthetic generator, PV shifting and efficiency sampling.
//
// Profile CSV (long format, one row per household and interval):
//   household_id,timestamp,demand_kwh,pv_kwh

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "coopex/battery.hpp"
#include "coopex/error.hpp"
#include "coopex/market.hpp"
#include "coopex/mechanism.hpp"
#include "json.hpp"

namespace coopex {

inline constexpr double kEtaFloor = 0.05;
inline constexpr const char* kSyntheticSource = "synthetic";

struct ScenarioConfig {
  std::size_t n_prosumers = 10;
  std::size_t days = 7;
  double dt_hours = kDefaultDtHours;
  std::string start = "2018-06-04T00:00:00";
  double price = 0.25;
  double eta_mean = 0.9;
  double eta_std = 0.05;
  double pv_shift_span_hours = 6.0;
  /// Share of households whose PV pattern is shifted.
  double pv_shift_fraction = 0.5;
  std::uint64_t seed = 1;
  double big_m = 1e4;
  double alpha_default = 0.9;
  BatterySpec battery;
  std::string data_source = kSyntheticSource;
  /// Pick a seeded random subset of a CSV's households instead of the first n.
  bool random_subset = false;

  // Experiment knobs.
  std::size_t pool_size = 150;
  std::size_t trials = 5;
  std::vector<std::size_t> loss_population_sizes{10, 20};
  std::vector<double> eta_std_grid{0.0, 0.02, 0.05, 0.1};

  [[nodiscard]] std::size_t steps_per_day() const { return static_cast<std::size_t>(std::llround(24.0 / dt_hours)); }
  [[nodiscard]] std::size_t horizon() const { return days * steps_per_day(); }

  void validate() const {
    if (n_prosumers < 1) throw ConfigError("n_prosumers must be >= 1");
    if (days < 1) throw ConfigError("days must be >= 1");
    if (!(dt_hours > 0.0)) throw ConfigError("dt_hours must be > 0");
    if (std::abs(24.0 / dt_hours - static_cast<double>(steps_per_day())) > 1e-9) {
      throw ConfigError("dt_hours must divide a day into whole intervals");
    }
    if (!parse_iso(start)) throw ConfigError("start is not an ISO-8601 timestamp: " + start);
    if (!(price > 0.0)) throw ConfigError("price must be > 0");
    if (!std::isfinite(eta_mean)) throw ConfigError("eta_mean must be finite");
    if (!(eta_std >= 0.0)) throw ConfigError("eta_std must be >= 0");
    if (!(pv_shift_span_hours >= 0.0) || pv_shift_span_hours > 24.0) {
      throw ConfigError("pv_shift_span_hours must lie in [0, 24]");
    }
    if (!(pv_shift_fraction >= 0.0 && pv_shift_fraction <= 1.0)) {
      throw ConfigError("pv_shift_fraction must lie in [0, 1]");
    }
    if (!(alpha_default >= 0.0 && alpha_default < 1.0)) throw ConfigError("alpha_default must lie in [0, 1)");
    if (!(big_m > 0.0) || !std::isfinite(big_m)) throw ConfigError("big_m must be finite and > 0");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    battery.validate();
  }

  [[nodiscard]] SimulationSettings simulation_settings() const {
    return {dt_hours, *parse_iso(start), big_m};
  }
};

inline void to_json(nlohmann::json& j, const BatterySpec& b) {
  j = {{"capacity_kwh", b.capacity_kwh},         {"charge_limit_kw", b.charge_limit_kw},
       {"discharge_limit_kw", b.discharge_limit_kw}, {"soc_min_frac", b.soc_min_frac},
       {"soc_max_frac", b.soc_max_frac},         {"round_trip_eta", b.round_trip_eta},
       {"degradation_frac", b.degradation_frac}, {"initial_soc_frac", b.initial_soc_frac}};
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) {
    try {
      field = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError(std::string("unknown ") + where + " field '" + key + "'");
    }
  }
}

}  // namespace detail

inline void from_json(const nlohmann::json& j, BatterySpec& b) {
  detail::reject_unknown(j,
                         {"capacity_kwh", "charge_limit_kw", "discharge_limit_kw", "soc_min_frac", "soc_max_frac",
                          "round_trip_eta", "degradation_frac", "initial_soc_frac"},
                         "battery");
  detail::read_field(j, "capacity_kwh", b.capacity_kwh);
  detail::read_field(j, "charge_limit_kw", b.charge_limit_kw);
  detail::read_field(j, "discharge_limit_kw", b.discharge_limit_kw);
  detail::read_field(j, "soc_min_frac", b.soc_min_frac);
  detail::read_field(j, "soc_max_frac", b.soc_max_frac);
  detail::read_field(j, "round_trip_eta", b.round_trip_eta);
  detail::read_field(j, "degradation_frac", b.degradation_frac);
  detail::read_field(j, "initial_soc_frac", b.initial_soc_frac);
}

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  j = {{"n_prosumers", c.n_prosumers},
       {"days", c.days},
       {"dt_hours", c.dt_hours},
       {"start", c.start},
       {"price", c.price},
       {"eta_mean", c.eta_mean},
       {"eta_std", c.eta_std},
       {"pv_shift_span_hours", c.pv_shift_span_hours},
       {"pv_shift_fraction", c.pv_shift_fraction},
       {"seed", c.seed},
       {"big_m", c.big_m},
       {"alpha_default", c.alpha_default},
       {"battery", c.battery},
       {"data_source", c.data_source},
       {"random_subset", c.random_subset},
       {"pool_size", c.pool_size},
       {"trials", c.trials},
       {"loss_population_sizes", c.loss_population_sizes},
       {"eta_std_grid", c.eta_std_grid}};
}

/// Missing fields keep their defaults; unknown fields are rejected.
inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  detail::reject_unknown(j,
                         {"n_prosumers", "days", "dt_hours", "start", "price", "eta_mean", "eta_std",
                          "pv_shift_span_hours", "pv_shift_fraction", "seed", "big_m", "alpha_default", "battery",
                          "data_source", "random_subset", "pool_size", "trials", "loss_population_sizes",
                          "eta_std_grid"},
                         "config");
  detail::read_field(j, "n_prosumers", c.n_prosumers);
  detail::read_field(j, "days", c.days);
  detail::read_field(j, "dt_hours", c.dt_hours);
  detail::read_field(j, "start", c.start);
  detail::read_field(j, "price", c.price);
  detail::read_field(j, "eta_mean", c.eta_mean);
  detail::read_field(j, "eta_std", c.eta_std);
  detail::read_field(j, "pv_shift_span_hours", c.pv_shift_span_hours);
  detail::read_field(j, "pv_shift_fraction", c.pv_shift_fraction);
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "big_m", c.big_m);
  detail::read_field(j, "alpha_default", c.alpha_default);
  if (j.contains("battery")) c.battery = j.at("battery").get<BatterySpec>();
  detail::read_field(j, "data_source", c.data_source);
  detail::read_field(j, "random_subset", c.random_subset);
  detail::read_field(j, "pool_size", c.pool_size);
  detail::read_field(j, "trials", c.trials);
  detail::read_field(j, "loss_population_sizes", c.loss_population_sizes);
  detail::read_field(j, "eta_std_grid", c.eta_std_grid);
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  auto config = j.get<ScenarioConfig>();
  config.validate();
  return config;
}

/// Independent random stream per (seed, purpose, index).
inline std::mt19937_64 seeded_stream(std::uint64_t seed, std::uint32_t purpose, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose,
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace stream {
inline constexpr std::uint32_t household = 1;
inline constexpr std::uint32_t weather = 2;
inline constexpr std::uint32_t efficiency = 3;
inline constexpr std::uint32_t shift = 4;
inline constexpr std::uint32_t subset = 5;
}  // namespace stream

/// Synthetic households. Household h depends only on (seed, h), so a larger
/// population extends a smaller one. Demand has morning and evening peaks;
/// PV follows a 06:00-18:00 bell scaled by a shared daily weather factor.
inline std::vector<ProsumerProfile> synthesize_profiles(const ScenarioConfig& config) {
  config.validate();
  const std::size_t per_day = config.steps_per_day();
  const double dt = config.dt_hours;

  std::vector<double> weather(config.days);
  {
    auto rng = seeded_stream(config.seed, stream::weather);
    std::uniform_real_distribution<double> clearness(0.35, 1.0);
    for (double& w : weather) w = clearness(rng);
  }

  auto bump = [](double hour, double centre, double width) {
    const double z = (hour - centre) / width;
    return std::exp(-0.5 * z * z);
  };

  std::vector<ProsumerProfile> profiles(config.n_prosumers);
  for (std::size_t h = 0; h < config.n_prosumers; ++h) {
    auto rng = seeded_stream(config.seed, stream::household, h);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    const double base_kw = uniform(0.2, 0.45);
    const double morning_kw = uniform(0.6, 1.4);
    const double morning_at = uniform(6.5, 8.5);
    const double evening_kw = uniform(1.0, 2.2);
    const double evening_at = uniform(18.0, 20.5);
    const double pv_kwp = uniform(3.0, 6.5);

    auto& p = profiles[h];
    p.id = "H" + std::to_string(h);
    p.battery = config.battery;
    p.demand_kwh.resize(config.horizon());
    p.pv_kwh.resize(config.horizon());
    for (std::size_t d = 0; d < config.days; ++d) {
      for (std::size_t k = 0; k < per_day; ++k) {
        const std::size_t t = d * per_day + k;
        const double hour = (static_cast<double>(k) + 0.5) * dt;
        const double kw = base_kw + morning_kw * bump(hour, morning_at, 0.9) + evening_kw * bump(hour, evening_at, 1.4);
        p.demand_kwh[t] = std::max(0.0, kw * dt * (1.0 + 0.15 * noise(rng)));
        double pv = 0.0;
        if (hour > 6.0 && hour < 18.0) {
          const double shape = std::pow(std::sin(std::numbers::pi * (hour - 6.0) / 12.0), 1.5);
          pv = std::max(0.0, pv_kwp * shape * weather[d] * dt * (1.0 + 0.05 * noise(rng)));
        }
        p.pv_kwh[t] = pv;
      }
    }
  }
  return profiles;
}

/// Rotates PV within each day by round(shift / dt) intervals.
inline ProsumerProfile shift_pv(const ProsumerProfile& profile, double shift_hours, double dt_hours = kDefaultDtHours) {
  const auto per_day = static_cast<std::size_t>(std::llround(24.0 / dt_hours));
  if (profile.horizon() % per_day != 0) throw ConfigError("profile horizon is not a whole number of days");
  const auto steps = std::llround(shift_hours / dt_hours);
  const auto offset = static_cast<std::size_t>(((steps % static_cast<long long>(per_day)) + static_cast<long long>(per_day)) %
                                               static_cast<long long>(per_day));
  ProsumerProfile out = profile;
  if (offset == 0) return out;
  for (std::size_t base = 0; base < profile.horizon(); base += per_day) {
    for (std::size_t k = 0; k < per_day; ++k) {
      out.pv_kwh[base + (k + offset) % per_day] = profile.pv_kwh[base + k];
    }
  }
  return out;
}

/// n draws of eta_mean + eta_std * z, z ~ N(0, 1), clipped into [0.05, 1].
inline std::vector<double> sample_efficiencies(const ScenarioConfig& config) {
  if (!(config.eta_std >= 0.0)) throw ConfigError("eta_std must be >= 0");
  auto rng = seeded_stream(config.seed, stream::efficiency);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> etas(config.n_prosumers);
  for (double& eta : etas) eta = std::clamp(config.eta_mean + config.eta_std * z(rng), kEtaFloor, 1.0);
  return etas;
}

/// Per-household PV shift in hours: zero for unshifted households, otherwise
/// uniform on [0, span] rounded to the interval.
inline std::vector<double> sample_pv_shifts(const ScenarioConfig& config) {
  auto rng = seeded_stream(config.seed, stream::shift);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> shifts(config.n_prosumers, 0.0);
  for (double& s : shifts) {
    const bool chosen = u01(rng) < config.pv_shift_fraction;
    const double hours = u01(rng) * config.pv_shift_span_hours;
    if (chosen) s = static_cast<double>(std::llround(hours / config.dt_hours)) * config.dt_hours;
  }
  return shifts;
}

/// Reads the long-format profile CSV, keeping households in order of first
/// appearance. Every household must cover days * 24 / dt intervals.
inline std::vector<ProsumerProfile> parse_profiles(std::istream& in, const ScenarioConfig& config) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty profile file", line_no);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "household_id,timestamp,demand_kwh,pv_kwh") {
    throw ParseError("header must be household_id,timestamp,demand_kwh,pv_kwh", line_no);
  }

  struct Series {
    ProsumerProfile profile;
    Timestamp last{};
  };
  std::vector<Series> series;
  std::map<std::string, std::size_t> index;
  const auto step = to_seconds(config.dt_hours);
  static constexpr const char* kColumns[] = {"household_id", "timestamp", "demand_kwh", "pv_kwh"};

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) throw ParseError("expected 4 columns, got " + std::to_string(cells.size()), line_no);

    const auto ts = parse_iso(cells[1]);
    if (!ts) throw ParseError("column timestamp: not ISO-8601: '" + cells[1] + "'", line_no);
    double values[2];
    for (int c = 0; c < 2; ++c) {
      const std::string& text = cells[2 + c];
      std::size_t used = 0;
      try {
        values[c] = std::stod(text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != text.size() || !std::isfinite(values[c])) {
        throw ParseError(std::string("column ") + kColumns[2 + c] + ": not a number: '" + text + "'", line_no);
      }
      if (values[c] < 0.0) throw ParseError(std::string("column ") + kColumns[2 + c] + ": negative value", line_no);
    }

    auto [it, inserted] = index.try_emplace(cells[0], series.size());
    if (inserted) {
      series.push_back({});
      series.back().profile.id = cells[0];
      series.back().profile.battery = config.battery;
    } else if (*ts != series[it->second].last + step) {
      throw ParseError("household " + cells[0] + ": timestamps must advance by exactly one interval", line_no);
    }
    auto& s = series[it->second];
    s.last = *ts;
    s.profile.demand_kwh.push_back(values[0]);
    s.profile.pv_kwh.push_back(values[1]);
  }

  std::vector<ProsumerProfile> profiles;
  for (auto& s : series) {
    if (s.profile.horizon() != config.horizon()) {
      throw ParseError("household " + s.profile.id + " has " + std::to_string(s.profile.horizon()) +
                       " intervals, expected " + std::to_string(config.horizon()));
    }
    profiles.push_back(std::move(s.profile));
  }
  return profiles;
}

/// Picks n households: the first n, or a seeded random subset.
inline std::vector<ProsumerProfile> select_households(std::vector<ProsumerProfile> pool, std::size_t n,
                                                      bool random_subset, std::uint64_t seed) {
  if (pool.size() < n) {
    throw ConfigError("need " + std::to_string(n) + " households but only " + std::to_string(pool.size()) +
                      " are available");
  }
  if (random_subset) {
    auto rng = seeded_stream(seed, stream::subset);
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(n);
    std::sort(order.begin(), order.end());
    std::vector<ProsumerProfile> picked;
    for (std::size_t i : order) picked.push_back(std::move(pool[i]));
    return picked;
  }
  pool.resize(n);
  return pool;
}

inline std::vector<ProsumerProfile> load_profiles(const std::string& path, const ScenarioConfig& config) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile file " + path);
  return select_households(parse_profiles(in, config), config.n_prosumers, config.random_subset, config.seed);
}

inline void write_profiles_csv(std::ostream& out, std::span<const ProsumerProfile> profiles, Timestamp start,
                               double dt_hours) {
  const auto step = to_seconds(dt_hours);
  out << "household_id,timestamp,demand_kwh,pv_kwh\n";
  char buf[64];
  for (const auto& p : profiles) {
    for (std::size_t t = 0; t < p.horizon(); ++t) {
      out << p.id << ',' << format_iso(start + step * static_cast<long>(t)) << ',';
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.demand_kwh[t], p.pv_kwh[t]);
      out << buf;
    }
  }
}

/// Applies sampled efficiencies and PV shifts to the given households.
inline Scenario assemble_scenario(const ScenarioConfig& config, std::vector<ProsumerProfile> households) {
  const auto etas = sample_efficiencies(config);
  const auto shifts = sample_pv_shifts(config);
  Scenario scenario;
  scenario.settings = config.simulation_settings();
  for (std::size_t i = 0; i < households.size(); ++i) {
    auto p = shift_pv(households[i], shifts.at(i), config.dt_hours);
    p.battery = config.battery;
    p.battery.round_trip_eta = etas.at(i);
    scenario.prosumers.push_back(std::move(p));
  }
  scenario.validate();
  return scenario;
}

/// Households from the configured source, then efficiencies and PV shifts.
inline Scenario build_scenario(const ScenarioConfig& config) {
  config.validate();
  auto households = config.data_source == kSyntheticSource ? synthesize_profiles(config)
                                                           : load_profiles(config.data_source, config);
  return assemble_scenario(config, std::move(households));
}

}  // namespace coopex
