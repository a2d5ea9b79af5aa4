#pragma once

// Operation-cycle simulation under the three mechanisms:
//   0  no flexibility: every net position is settled with the grid
//   1  individual control: each battery serves only its own household
//   2  exchange and control: offers are cleared locally first, then each
//      battery acts on what the exchange left over

#include <algorithm>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "coopex/allocation.hpp"
#include "coopex/battery.hpp"
#include "coopex/error.hpp"
#include "coopex/market.hpp"
#include "json.hpp"

namespace coopex {

enum class Mechanism { no_flexibility = 0, individual = 1, exchange = 2 };

inline constexpr int mechanism_id(Mechanism m) noexcept { return static_cast<int>(m); }

inline Mechanism mechanism_from_id(int id) {
  if (id < 0 || id > 2) throw ConfigError("mechanism must be 0, 1 or 2");
  return static_cast<Mechanism>(id);
}

struct ProsumerProfile {
  std::string id;
  std::vector<double> demand_kwh;
  std::vector<double> pv_kwh;
  BatterySpec battery;

  [[nodiscard]] std::size_t horizon() const noexcept { return demand_kwh.size(); }

  void validate() const {
    if (demand_kwh.size() != pv_kwh.size()) throw ConfigError("profile " + id + ": demand/pv lengths differ");
    for (std::size_t t = 0; t < demand_kwh.size(); ++t) {
      if (!(demand_kwh[t] >= 0.0) || !(pv_kwh[t] >= 0.0) || !std::isfinite(demand_kwh[t]) ||
          !std::isfinite(pv_kwh[t])) {
        throw ConfigError("profile " + id + ": negative or non-finite value at step " + std::to_string(t));
      }
    }
    battery.validate();
  }

  friend bool operator==(const ProsumerProfile&, const ProsumerProfile&) = default;
};

struct SimulationSettings {
  double dt_hours = kDefaultDtHours;
  Timestamp start{};
  double big_m = 1e4;
};

/// A population ready to simulate. Prosumer indices refer to this vector.
struct Scenario {
  SimulationSettings settings;
  std::vector<ProsumerProfile> prosumers;

  [[nodiscard]] std::size_t horizon() const { return prosumers.empty() ? 0 : prosumers.front().horizon(); }

  void validate() const {
    if (!(settings.dt_hours > 0.0)) throw ConfigError("dt must be > 0");
    for (const auto& p : prosumers) {
      p.validate();
      if (p.horizon() != horizon()) throw ConfigError("all profiles must share one horizon");
    }
  }
};

struct TraceRecord {
  double demand = 0.0;
  double pv = 0.0;
  /// Ex: + received from peers, - delivered to peers.
  double exchange = 0.0;
  /// pb: + charging draws, - discharging delivers.
  double battery = 0.0;
  /// D = d - pv - Ex + pb
  double net_demand = 0.0;
  double grid_import = 0.0;
  double spill = 0.0;
  /// Stored energy at the end of the interval.
  double soc = 0.0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

/// Fills D, grid import and spill from the other fields.
inline TraceRecord settle_record(double demand, double pv, double exchange, double battery, double soc) {
  TraceRecord r{demand, pv, exchange, battery, 0.0, 0.0, 0.0, soc};
  r.net_demand = demand - pv - exchange + battery;
  r.grid_import = positive_part(r.net_demand);
  r.spill = positive_part(-r.net_demand);
  return r;
}

struct ProsumerTrace {
  std::size_t prosumer = 0;
  std::vector<TraceRecord> records;
  BatteryState initial;
  BatteryState final_state;
  /// theta: meter-side energy needed to restore the initial SOC.
  double restoration_offset = 0.0;

  [[nodiscard]] double total_battery() const {
    double sum = 0.0;
    for (const auto& r : records) sum += r.battery;
    return sum;
  }
  [[nodiscard]] double total_exchange() const {
    double sum = 0.0;
    for (const auto& r : records) sum += r.exchange;
    return sum;
  }
  [[nodiscard]] double total_grid_import() const {
    double sum = 0.0;
    for (const auto& r : records) sum += r.grid_import;
    return sum;
  }

  friend bool operator==(const ProsumerTrace&, const ProsumerTrace&) = default;
};

struct SimulationTrace {
  Mechanism mechanism = Mechanism::no_flexibility;
  std::vector<ProsumerTrace> prosumers;

  /// Trace of scenario prosumer `index`; throws if it was not simulated.
  [[nodiscard]] const ProsumerTrace& of(std::size_t index) const {
    for (const auto& p : prosumers) {
      if (p.prosumer == index) return p;
    }
    throw StructuralError("prosumer " + std::to_string(index) + " is not part of this trace");
  }

  friend bool operator==(const SimulationTrace&, const SimulationTrace&) = default;
};

struct StepOutcome {
  TraceRecord record;
  BatteryState state;
};

inline TraceRecord step_no_flexibility(const ProsumerProfile& profile, std::size_t t, const BatteryState& state = {}) {
  return settle_record(profile.demand_kwh.at(t), profile.pv_kwh.at(t), 0.0, 0.0, state.soc_kwh);
}

inline StepOutcome step_individual(const ProsumerProfile& profile, const BatteryState& state, std::size_t t,
                                   double dt_hours = kDefaultDtHours) {
  const double d = profile.demand_kwh.at(t);
  const double pv = profile.pv_kwh.at(t);
  const auto [pb, next] = battery_policy_greedy(state, net_position(d, pv), profile.battery, dt_hours);
  return {settle_record(d, pv, 0.0, pb, next.soc_kwh), next};
}

struct ExchangeStep {
  std::vector<MarketOffer> offers;
  /// Positions (into the profiles span) of the prosumers behind each buyer row
  /// and each seller column of the allocation.
  std::vector<std::size_t> buyers;
  std::vector<std::size_t> sellers;
  std::vector<double> demands;
  std::vector<double> supplies;
  CostMatrix costs;
  AllocationMatrix allocation;
  std::vector<StepOutcome> outcomes;
};

/// One interval of the exchange mechanism for the given members.
inline ExchangeStep step_exchange(std::span<const ProsumerProfile* const> profiles,
                                  std::span<const BatteryState> states, std::size_t t,
                                  const SimulationSettings& settings) {
  if (profiles.size() != states.size()) throw StructuralError("one battery state per profile is required");
  ExchangeStep step;
  const auto dt = to_seconds(settings.dt_hours);
  const Timestamp interval = settings.start + dt * static_cast<long>(t);

  std::vector<double> etas;
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    const auto& p = *profiles[k];
    const double net = net_position(p.demand_kwh.at(t), p.pv_kwh.at(t));
    if (net == 0.0) continue;
    auto offer = make_offer(net, p.battery.round_trip_eta, interval, dt);
    if (offer.is_bid()) {
      step.buyers.push_back(k);
      step.demands.push_back(offer.quantity());
    } else {
      step.sellers.push_back(k);
      step.supplies.push_back(offer.quantity());
      etas.push_back(*offer.efficiency);
    }
    step.offers.push_back(std::move(offer));
  }

  const auto cm = ConnectivityMatrix::fully_connected(step.demands.size(), step.supplies.size());
  step.costs = build_cost_matrix(etas, step.demands.size(), cm, settings.big_m);
  step.allocation = solve_allocation(step.demands, step.supplies, step.costs, cm);

  // Ex and the residual each battery sees after the exchange.
  std::vector<double> exchange(profiles.size(), 0.0), residual(profiles.size(), 0.0);
  for (std::size_t b = 0; b < step.buyers.size(); ++b) {
    exchange[step.buyers[b]] = step.allocation.local_received(b);
    residual[step.buyers[b]] = step.allocation.from_grid(b);
  }
  for (std::size_t s = 0; s < step.sellers.size(); ++s) {
    exchange[step.sellers[s]] = -step.allocation.local_delivered(s);
    residual[step.sellers[s]] = -step.allocation.to_grid(s);
  }

  step.outcomes.reserve(profiles.size());
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    const auto& p = *profiles[k];
    const auto [pb, next] = battery_policy_greedy(states[k], residual[k], p.battery, settings.dt_hours);
    step.outcomes.push_back(
        {settle_record(p.demand_kwh[t], p.pv_kwh[t], exchange[k], pb, next.soc_kwh), next});
  }
  return step;
}

/// Receives (interval index, instance dump) for every cleared interval.
using AllocationObserver = std::function<void(std::size_t, const nlohmann::json&)>;

/// Simulates the members listed in `include` (scenario indices, ascending
/// order is used for tie-breaking) over the full horizon.
inline SimulationTrace run_simulation(const Scenario& scenario, Mechanism mechanism,
                                      std::span<const std::size_t> include,
                                      const AllocationObserver& observer = {}) {
  if (include.empty()) throw ConfigError("simulation needs at least one prosumer");
  std::vector<std::size_t> members(include.begin(), include.end());
  std::sort(members.begin(), members.end());
  if (std::adjacent_find(members.begin(), members.end()) != members.end()) {
    throw ConfigError("prosumer subset contains duplicates");
  }
  for (std::size_t i : members) {
    if (i >= scenario.prosumers.size()) throw ConfigError("prosumer index out of range");
  }
  const std::size_t horizon = scenario.horizon();
  const double dt = scenario.settings.dt_hours;

  SimulationTrace trace;
  trace.mechanism = mechanism;
  std::vector<const ProsumerProfile*> profiles;
  std::vector<BatteryState> states;
  for (std::size_t i : members) {
    const auto& p = scenario.prosumers[i];
    profiles.push_back(&p);
    states.push_back(BatteryState::initial(p.battery));
    ProsumerTrace pt;
    pt.prosumer = i;
    pt.initial = states.back();
    pt.records.reserve(horizon);
    trace.prosumers.push_back(std::move(pt));
  }

  for (std::size_t t = 0; t < horizon; ++t) {
    switch (mechanism) {
      case Mechanism::no_flexibility:
        for (std::size_t k = 0; k < profiles.size(); ++k) {
          trace.prosumers[k].records.push_back(step_no_flexibility(*profiles[k], t, states[k]));
        }
        break;
      case Mechanism::individual:
        for (std::size_t k = 0; k < profiles.size(); ++k) {
          auto out = step_individual(*profiles[k], states[k], t, dt);
          trace.prosumers[k].records.push_back(out.record);
          states[k] = out.state;
        }
        break;
      case Mechanism::exchange: {
        auto step = step_exchange(profiles, states, t, scenario.settings);
        if (observer) {
          auto dump = allocation_instance_json(step.demands, step.supplies, step.costs, step.allocation);
          std::vector<std::size_t> buyer_ids, seller_ids;
          for (std::size_t b : step.buyers) buyer_ids.push_back(members[b]);
          for (std::size_t s : step.sellers) seller_ids.push_back(members[s]);
          dump["buyers"] = buyer_ids;
          dump["sellers"] = seller_ids;
          observer(t, dump);
        }
        for (std::size_t k = 0; k < profiles.size(); ++k) {
          trace.prosumers[k].records.push_back(step.outcomes[k].record);
          states[k] = step.outcomes[k].state;
        }
        break;
      }
    }
  }

  for (std::size_t k = 0; k < profiles.size(); ++k) {
    auto& pt = trace.prosumers[k];
    pt.final_state = states[k];
    pt.restoration_offset = soc_restoration_offset(pt.initial, pt.final_state, profiles[k]->battery);
  }
  return trace;
}

inline SimulationTrace run_simulation(const Scenario& scenario, Mechanism mechanism,
                                      const AllocationObserver& observer = {}) {
  std::vector<std::size_t> all(scenario.prosumers.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return run_simulation(scenario, mechanism, all, observer);
}

/// The same cycle with one prosumer removed from the population.
inline SimulationTrace run_counterfactual_without(const Scenario& scenario, Mechanism mechanism,
                                                  std::size_t excluded) {
  if (scenario.prosumers.size() < 2) throw ConfigError("counterfactual needs at least two prosumers");
  if (excluded >= scenario.prosumers.size()) throw ConfigError("excluded prosumer index out of range");
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < scenario.prosumers.size(); ++i) {
    if (i != excluded) rest.push_back(i);
  }
  return run_simulation(scenario, mechanism, rest);
}

}  // namespace coopex
