#pragma once

// Payments after an operation cycle. Losses are reported as nonnegative
// energy destroyed by battery round trips; rewards redistribute the system
// loss by each agent's marginal contribution (difference evaluation).

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "coopex/error.hpp"
#include "coopex/mechanism.hpp"

namespace coopex {

inline constexpr double kSettlementTolerance = 1e-9;

/// Sum of dispatched battery energy plus the SOC restoration offset; the
/// energy i's battery destroyed over the cycle.
inline double agent_loss(const ProsumerTrace& trace) {
  return trace.total_battery() + trace.restoration_offset;
}

inline double agent_loss(const SimulationTrace& trace, std::size_t prosumer) {
  return agent_loss(trace.of(prosumer));
}

inline double system_loss(const SimulationTrace& trace) {
  double total = 0.0;
  for (const auto& p : trace.prosumers) total += agent_loss(p);
  return total;
}

/// Difference evaluation: system loss with i minus system loss without i.
inline double marginal_loss(const Scenario& scenario, Mechanism mechanism, std::size_t prosumer) {
  const auto full = run_simulation(scenario, mechanism);
  const auto without = run_counterfactual_without(scenario, mechanism, prosumer);
  return system_loss(full) - system_loss(without);
}

/// All marginal losses against an already simulated full population.
inline std::vector<double> marginal_losses(const Scenario& scenario, Mechanism mechanism,
                                           const SimulationTrace& full) {
  const double total = system_loss(full);
  std::vector<double> marginals(scenario.prosumers.size());
  for (std::size_t i = 0; i < marginals.size(); ++i) {
    marginals[i] = total - system_loss(run_counterfactual_without(scenario, mechanism, i));
  }
  return marginals;
}

/// w_i = exp(m_i) / sum_j exp(m_j), evaluated with the maximum subtracted.
inline std::vector<double> softmax_weights(std::span<const double> marginals) {
  std::vector<double> w(marginals.size());
  if (marginals.empty()) return w;
  const double top = *std::max_element(marginals.begin(), marginals.end());
  double denom = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(marginals[i])) throw NumericError("marginal losses must be finite");
    denom += w[i] = std::exp(marginals[i] - top);
  }
  for (double& x : w) x /= denom;
  return w;
}

/// R_i = L_i - w_i * system_loss. Zero-sum whenever the weights sum to one
/// and the system loss is the sum of the agent losses.
inline std::vector<double> component_rewards(std::span<const double> losses, std::span<const double> weights,
                                             double system) {
  if (losses.size() != weights.size()) throw SettlementError("one weight per agent loss is required");
  const double weight_sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double loss_sum = std::accumulate(losses.begin(), losses.end(), 0.0);
  if (std::abs(weight_sum - 1.0) > kSettlementTolerance) throw SettlementError("weights do not sum to one");
  if (std::abs(loss_sum - system) > kSettlementTolerance) {
    throw SettlementError("system loss differs from the sum of agent losses");
  }
  std::vector<double> rewards(losses.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) rewards[i] = losses[i] - weights[i] * system;
  return rewards;
}

/// u_i(m) = -p [ grid + alpha * Ex - (1 - alpha) * R ]. Mechanisms 0 and 1
/// have neither exchange nor reward.
inline double utility(const ProsumerTrace& trace, Mechanism mechanism, double alpha, double price,
                      double reward = 0.0) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
  if (!(price > 0.0)) throw ConfigError("price must be > 0");
  const double grid = trace.total_grid_import();
  if (mechanism != Mechanism::exchange) return -price * grid;
  return -price * (grid + alpha * trace.total_exchange() - (1.0 - alpha) * reward);
}

inline double utility(const SimulationTrace& trace, std::size_t prosumer, double alpha, double price,
                      double reward = 0.0) {
  return utility(trace.of(prosumer), trace.mechanism, alpha, price, reward);
}

/// Per-agent totals that the individual-rationality test needs.
struct RationalityInputs {
  double grid_none = 0.0;        // sum_t grid import, mechanism 0
  double grid_individual = 0.0;  // mechanism 1
  double grid_exchange = 0.0;    // mechanism 2
  double exchange = 0.0;         // sum_t Ex, mechanism 2
  double reward = 0.0;           // R, mechanism 2
};

struct AlphaChoice {
  double alpha = 0.0;
  bool feasible = false;
  /// Feasible set [lower, upper] intersected with [0, 1); empty if lower > upper.
  double lower = 0.0;
  double upper = 1.0;
};

/// Lowest alpha in [0, 1) with u_i(2) >= u_i(k) for every agent and both
/// baselines. Each condition reads alpha * (Ex + R) <= G_k - G_2 + R and so
/// bounds alpha from one side; their intersection is an interval.
inline AlphaChoice find_alpha(std::span<const RationalityInputs> agents, double default_alpha) {
  constexpr double kFlat = 1e-12;
  AlphaChoice choice;
  bool vacuous_violation = false;
  for (const auto& a : agents) {
    const double slope = a.exchange + a.reward;
    for (double baseline : {a.grid_none, a.grid_individual}) {
      const double bound = baseline - a.grid_exchange + a.reward;
      if (std::abs(slope) <= kFlat) {
        if (bound < -kSettlementTolerance) vacuous_violation = true;
      } else if (slope > 0.0) {
        choice.upper = std::min(choice.upper, bound / slope);
      } else {
        choice.lower = std::max(choice.lower, bound / slope);
      }
    }
  }
  choice.feasible = !vacuous_violation && choice.lower <= choice.upper && choice.lower < 1.0;
  choice.alpha = choice.feasible ? choice.lower : default_alpha;
  return choice;
}

inline double social_welfare(std::span<const double> utilities) {
  return std::accumulate(utilities.begin(), utilities.end(), 0.0);
}

struct NashFairness {
  double log_value = 0.0;
  bool defined = false;
};

/// log prod_i (u_i(m) - u_i(k)); undefined unless every improvement is positive.
inline NashFairness nash_fairness(std::span<const double> u_m, std::span<const double> u_k) {
  if (u_m.size() != u_k.size()) throw SettlementError("utility vectors differ in length");
  NashFairness f{0.0, true};
  for (std::size_t i = 0; i < u_m.size(); ++i) {
    const double delta = u_m[i] - u_k[i];
    if (!(delta > 0.0)) return {0.0, false};
    f.log_value += std::log(delta);
  }
  return f;
}

struct AgentSettlement {
  std::size_t prosumer = 0;
  double loss = 0.0;           // L_i, mechanism 2
  double loss_individual = 0.0;  // L_i, mechanism 1
  double marginal_loss = 0.0;
  double weight = 0.0;
  double reward = 0.0;
  std::array<double, 3> grid{};  // sum_t grid import per mechanism
  double exchange = 0.0;         // sum_t Ex, mechanism 2
  std::array<double, 3> utility{};
};

struct SettlementReport {
  std::vector<AgentSettlement> agents;
  double system_loss = 0.0;             // mechanism 2
  double system_loss_individual = 0.0;  // mechanism 1
  double price = 0.0;
  AlphaChoice alpha;
  std::array<double, 3> social_welfare{};
  NashFairness fairness_exchange;    // f_{2|0}
  NashFairness fairness_individual;  // f_{1|0}

  [[nodiscard]] double loss_reduction() const { return system_loss_individual - system_loss; }
  [[nodiscard]] std::vector<double> utilities(Mechanism m) const {
    std::vector<double> u;
    for (const auto& a : agents) u.push_back(a.utility[static_cast<std::size_t>(m)]);
    return u;
  }
};

struct SettledScenario {
  SettlementReport report;
  std::array<SimulationTrace, 3> traces;
};

struct SettlementOptions {
  double price = 0.25;
  double default_alpha = 0.9;
};

/// Runs all three mechanisms plus the counterfactuals and settles the cycle.
inline SettledScenario settle(const Scenario& scenario, const SettlementOptions& options,
                              const AllocationObserver& observer = {}) {
  scenario.validate();
  const std::size_t n = scenario.prosumers.size();
  if (n < 2) throw ConfigError("settlement needs at least two prosumers");

  SettledScenario out;
  out.traces[0] = run_simulation(scenario, Mechanism::no_flexibility);
  out.traces[1] = run_simulation(scenario, Mechanism::individual);
  out.traces[2] = run_simulation(scenario, Mechanism::exchange, observer);
  const auto& exchange = out.traces[2];

  auto& report = out.report;
  report.price = options.price;
  report.system_loss = system_loss(exchange);
  report.system_loss_individual = system_loss(out.traces[1]);

  std::vector<double> losses(n);
  for (std::size_t i = 0; i < n; ++i) losses[i] = agent_loss(exchange, i);
  const auto marginals = marginal_losses(scenario, Mechanism::exchange, exchange);
  const auto weights = softmax_weights(marginals);
  const auto rewards = component_rewards(losses, weights, report.system_loss);

  std::vector<RationalityInputs> ir(n);
  report.agents.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = report.agents[i];
    a.prosumer = i;
    a.loss = losses[i];
    a.loss_individual = agent_loss(out.traces[1], i);
    a.marginal_loss = marginals[i];
    a.weight = weights[i];
    a.reward = rewards[i];
    for (std::size_t m = 0; m < 3; ++m) a.grid[m] = out.traces[m].of(i).total_grid_import();
    a.exchange = exchange.of(i).total_exchange();
    ir[i] = {a.grid[0], a.grid[1], a.grid[2], a.exchange, a.reward};
  }

  report.alpha = find_alpha(ir, options.default_alpha);
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = report.agents[i];
    a.utility[0] = utility(out.traces[0], i, report.alpha.alpha, options.price);
    a.utility[1] = utility(out.traces[1], i, report.alpha.alpha, options.price);
    a.utility[2] = utility(exchange, i, report.alpha.alpha, options.price, a.reward);
  }
  for (std::size_t m = 0; m < 3; ++m) {
    report.social_welfare[m] = social_welfare(report.utilities(static_cast<Mechanism>(m)));
  }
  const auto u0 = report.utilities(Mechanism::no_flexibility);
  report.fairness_exchange = nash_fairness(report.utilities(Mechanism::exchange), u0);
  report.fairness_individual = nash_fairness(report.utilities(Mechanism::individual), u0);
  return out;
}

}  // namespace coopex
