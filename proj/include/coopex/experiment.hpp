#pragma once

// The two experiment harnesses: loss reduction against individual control
// across population size and efficiency spread, and the full payment and
// welfare settlement of one cooperative.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "coopex/scenario.hpp"
#include "coopex/settlement.hpp"

namespace coopex {

/// splitmix64 step; used to derive per-trial seeds from a base seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct ExperimentRow {
  std::size_t n_prosumers = 0;
  double eta_std = 0.0;
  std::uint64_t seed = 0;
  double loss_individual = 0.0;  // system loss, mechanism 1
  double loss_exchange = 0.0;    // system loss, mechanism 2
  double loss_reduction = 0.0;
  // Present only when the scenario was fully settled.
  std::optional<AlphaChoice> alpha;
  std::optional<std::array<double, 3>> social_welfare;
  std::optional<NashFairness> fairness_exchange;
  std::optional<NashFairness> fairness_individual;
};

struct LossSummary {
  std::size_t n_prosumers = 0;
  double eta_std = 0.0;
  std::size_t trials = 0;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t non_negative = 0;
};

/// (u_i(1) - u_i(0), u_i(2) - u_i(0)) for one prosumer.
struct ImprovementPair {
  std::size_t prosumer = 0;
  double individual = 0.0;
  double exchange = 0.0;
};

struct ExperimentReport {
  ScenarioConfig config;
  std::vector<ExperimentRow> rows;
  std::vector<LossSummary> summary;
  std::vector<ImprovementPair> improvements;
};

/// For every population size and efficiency spread, runs mechanisms 1 and 2
/// on `trials` random subsets of a synthetic household pool. The same trial
/// seeds are reused across spreads, so only the spread differs between them.
inline ExperimentReport run_experiment_loss_reduction(const ScenarioConfig& config) {
  config.validate();
  ExperimentReport report;
  report.config = config;

  std::vector<ProsumerProfile> pool;
  if (config.data_source == kSyntheticSource) {
    ScenarioConfig pool_config = config;
    pool_config.n_prosumers = config.pool_size;
    pool = synthesize_profiles(pool_config);
  } else {
    std::ifstream in(config.data_source);
    if (!in) throw ParseError("cannot open profile file " + config.data_source);
    pool = parse_profiles(in, config);
  }

  for (std::size_t n : config.loss_population_sizes) {
    for (double spread : config.eta_std_grid) {
      LossSummary summary{n, spread, config.trials, 0.0, 0.0, 0};
      std::vector<double> reductions;
      for (std::size_t trial = 0; trial < config.trials; ++trial) {
        ScenarioConfig trial_config = config;
        trial_config.n_prosumers = n;
        trial_config.eta_std = spread;
        trial_config.seed = derive_seed(config.seed, trial);
        const auto scenario =
            assemble_scenario(trial_config, select_households(pool, n, true, trial_config.seed));
        ExperimentRow row;
        row.n_prosumers = n;
        row.eta_std = spread;
        row.seed = trial_config.seed;
        row.loss_individual = system_loss(run_simulation(scenario, Mechanism::individual));
        row.loss_exchange = system_loss(run_simulation(scenario, Mechanism::exchange));
        row.loss_reduction = row.loss_individual - row.loss_exchange;
        reductions.push_back(row.loss_reduction);
        if (row.loss_reduction >= 0.0) ++summary.non_negative;
        report.rows.push_back(row);
      }
      for (double r : reductions) summary.mean += r / static_cast<double>(reductions.size());
      for (double r : reductions) summary.stddev += (r - summary.mean) * (r - summary.mean);
      summary.stddev = std::sqrt(summary.stddev / static_cast<double>(reductions.size()));
      report.summary.push_back(summary);
    }
  }
  return report;
}

inline ExperimentRow experiment_row(const ScenarioConfig& config, const SettlementReport& settled) {
  ExperimentRow row;
  row.n_prosumers = settled.agents.size();
  row.eta_std = config.eta_std;
  row.seed = config.seed;
  row.loss_individual = settled.system_loss_individual;
  row.loss_exchange = settled.system_loss;
  row.loss_reduction = settled.loss_reduction();
  row.alpha = settled.alpha;
  row.social_welfare = settled.social_welfare;
  row.fairness_exchange = settled.fairness_exchange;
  row.fairness_individual = settled.fairness_individual;
  return row;
}

/// Settles one cooperative under all mechanisms and reports the welfare
/// summary plus each prosumer's utility improvements over no flexibility.
inline ExperimentReport run_experiment_welfare(const ScenarioConfig& config, const AllocationObserver& observer = {}) {
  config.validate();
  if (config.n_prosumers < 2) throw ConfigError("welfare experiment needs at least two prosumers");
  const auto scenario = build_scenario(config);
  const auto settled = settle(scenario, {config.price, config.alpha_default}, observer);

  ExperimentReport report;
  report.config = config;
  report.rows.push_back(experiment_row(config, settled.report));
  for (const auto& a : settled.report.agents) {
    report.improvements.push_back({a.prosumer, a.utility[1] - a.utility[0], a.utility[2] - a.utility[0]});
  }
  return report;
}

}  // namespace coopex
