#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "coopex/allocation.hpp"

namespace coopex::testing {

/// Random clearing instance with integer quantities in [1, 10] and
/// efficiencies on the 0.1 grid in [0.5, 1.0].
struct RandomInstance {
  std::vector<double> demands;
  std::vector<double> supplies;
  std::vector<double> etas;
  ConnectivityMatrix cm;
  CostMatrix costs;
};

inline RandomInstance random_instance(std::mt19937_64& rng, bool random_connectivity = false) {
  std::uniform_int_distribution<int> side(1, 4), amount(1, 10), eta_step(5, 10);
  std::bernoulli_distribution link(0.7);
  RandomInstance inst;
  const int nb = side(rng), ns = side(rng);
  for (int b = 0; b < nb; ++b) inst.demands.push_back(amount(rng));
  for (int s = 0; s < ns; ++s) {
    inst.supplies.push_back(amount(rng));
    inst.etas.push_back(eta_step(rng) / 10.0);
  }
  inst.cm = ConnectivityMatrix::fully_connected(inst.demands.size(), inst.supplies.size());
  if (random_connectivity) {
    for (std::size_t b = 0; b < inst.demands.size(); ++b) {
      for (std::size_t s = 0; s < inst.supplies.size(); ++s) {
        if (!link(rng)) inst.cm.disconnect(b, s);
      }
    }
  }
  inst.costs = build_cost_matrix(inst.etas, inst.demands.size(), inst.cm, 1000.0);
  return inst;
}

inline double sum(const std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total;
}

}  // namespace coopex::testing
