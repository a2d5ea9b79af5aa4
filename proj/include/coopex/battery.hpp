#pragma once

// Residential battery: parameters, state, and the greedy local policy.
//
// Round-trip efficiency is split evenly: a meter-side charge of e kWh stores
// sqrt(eta) * e, and releasing s kWh of stored energy delivers sqrt(eta) * s.

#include <algorithm>
#include <cmath>
#include <string>

#include "coopex/error.hpp"
#include "coopex/market.hpp"

namespace coopex {

struct BatterySpec {
  double capacity_kwh = 6.8;
  double charge_limit_kw = 1.3;
  double discharge_limit_kw = 3.0;
  double soc_min_frac = 0.1;
  double soc_max_frac = 0.9;
  double round_trip_eta = 0.9;
  /// Capacity lost per kWh of state-of-charge movement, as a fraction of
  /// the nameplate capacity per full capacity moved.
  double degradation_frac = 0.001;
  double initial_soc_frac = 0.5;

  void validate() const {
    if (!(capacity_kwh > 0.0) || !std::isfinite(capacity_kwh)) throw ConfigError("battery capacity must be > 0");
    if (!(charge_limit_kw >= 0.0) || !(discharge_limit_kw >= 0.0)) {
      throw ConfigError("battery rate limits must be >= 0");
    }
    if (!(soc_min_frac >= 0.0 && soc_min_frac < soc_max_frac && soc_max_frac <= 1.0)) {
      throw ConfigError("battery SOC window must satisfy 0 <= min < max <= 1");
    }
    if (!(initial_soc_frac >= soc_min_frac && initial_soc_frac <= soc_max_frac)) {
      throw ConfigError("initial SOC must lie inside the SOC window");
    }
    if (!(degradation_frac >= 0.0 && degradation_frac < 1.0)) {
      throw ConfigError("degradation fraction must lie in [0, 1)");
    }
    if (!valid_efficiency(round_trip_eta)) {
      throw ConfigError("battery round-trip efficiency must lie in (0, 1]");
    }
  }

  [[nodiscard]] double one_way_eta() const { return std::sqrt(round_trip_eta); }

  friend bool operator==(const BatterySpec&, const BatterySpec&) = default;
};

struct BatteryState {
  double soc_kwh = 0.0;
  double effective_capacity_kwh = 0.0;
  /// Meter-side energy moved in either direction.
  double cumulative_throughput_kwh = 0.0;

  static BatteryState initial(const BatterySpec& spec) {
    return {spec.initial_soc_frac * spec.capacity_kwh, spec.capacity_kwh, 0.0};
  }

  [[nodiscard]] double soc_min(const BatterySpec& spec) const { return spec.soc_min_frac * effective_capacity_kwh; }
  [[nodiscard]] double soc_max(const BatterySpec& spec) const { return spec.soc_max_frac * effective_capacity_kwh; }

  [[nodiscard]] bool within_window(const BatterySpec& spec, double tol = 1e-9) const {
    return soc_kwh >= soc_min(spec) - tol && soc_kwh <= soc_max(spec) + tol;
  }

  friend bool operator==(const BatteryState&, const BatteryState&) = default;
};

struct DispatchResult {
  /// Meter-side energy: > 0 charging draws, < 0 discharging delivers.
  double pb_kwh;
  BatteryState state;
};

/// Charges from surplus (residual < 0) and discharges into deficit
/// (residual > 0), bounded by the rate limits over dt and the SOC window.
inline DispatchResult battery_policy_greedy(const BatteryState& state, double residual_kwh,
                                            const BatterySpec& spec, double dt_hours) {
  const double one_way = spec.one_way_eta();
  BatteryState next = state;
  double pb = 0.0;
  double soc_change = 0.0;
  if (residual_kwh < 0.0) {
    // Headroom shrinks with the degradation the charge itself causes.
    const double headroom = std::max(0.0, state.soc_max(spec) - state.soc_kwh) /
                            (1.0 + spec.soc_max_frac * spec.degradation_frac);
    pb = std::min({-residual_kwh, spec.charge_limit_kw * dt_hours, headroom / one_way});
    soc_change = one_way * pb;
    next.soc_kwh += soc_change;
  } else if (residual_kwh > 0.0) {
    const double available = std::max(0.0, state.soc_kwh - state.soc_min(spec));
    const double delivered = std::min({residual_kwh, spec.discharge_limit_kw * dt_hours, available * one_way});
    pb = -delivered;
    soc_change = delivered / one_way;
    next.soc_kwh = std::max(next.soc_kwh - soc_change, state.soc_min(spec));
  }
  next.effective_capacity_kwh -= spec.degradation_frac * spec.capacity_kwh * (soc_change / spec.capacity_kwh);
  next.cumulative_throughput_kwh += std::abs(pb);
  return {pb, next};
}

/// theta: the meter-side energy a hypothetical final dispatch would move to
/// return the battery to its initial SOC. Negative when the battery ends
/// fuller (it could deliver energy), positive when it ends emptier.
inline double soc_restoration_offset(const BatteryState& initial, const BatteryState& final_state,
                                     const BatterySpec& spec) {
  const double delta = final_state.soc_kwh - initial.soc_kwh;
  if (delta > 0.0) return -spec.one_way_eta() * delta;
  if (delta < 0.0) return -delta / spec.one_way_eta();
  return 0.0;
}

}  // namespace coopex
