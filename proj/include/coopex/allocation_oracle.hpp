#pragma once

// Exhaustive reference solver for small allocation instances. Used by tests to
// cross-check solve_allocation; never called on the simulation path.
//
// The grid row/column are unconstrained in the clearing LP. Giving the grid a
// demand of sum(E_s) and a supply of sum(E_b), with a free grid-to-grid slack
// cell, turns it into a balanced transportation problem with the same optimum.
// Every basic solution of that problem is a spanning forest of the bipartite
// row/column graph, and a forest can always be taken apart leaf by leaf: a
// leaf node ships its whole remaining amount over its single arc. The oracle
// searches every such peeling order (memoised on the remaining amounts), which
// visits every vertex of the feasible polytope.

#include <cmath>
#include <limits>
#include <functional>
#include <unordered_map>
#include <numeric>
#include <span>
#include <vector>

#include "coopex/allocation.hpp"

namespace coopex {

inline constexpr std::size_t kOracleMaxSide = 4;

namespace detail {

class LeafPeelingSearch {
 public:
  LeafPeelingSearch(std::vector<double> row_amounts, std::vector<double> col_amounts,
                    std::vector<std::vector<double>> cell_costs)
      : rows_(row_amounts.size()), costs_(std::move(cell_costs)) {
    amounts_ = std::move(row_amounts);
    amounts_.insert(amounts_.end(), col_amounts.begin(), col_amounts.end());
  }

  /// Flow per (row, col) cell of the cheapest vertex. Cells whose cost is
  /// infinite are treated as absent.
  std::vector<std::vector<double>> best() {
    const double cost = search(amounts_);
    if (!std::isfinite(cost)) throw StructuralError("no feasible basis");
    std::vector<std::vector<double>> flow(rows_, std::vector<double>(amounts_.size() - rows_, 0.0));
    auto state = amounts_;
    while (true) {
      const auto& entry = memo_.at(state);
      if (entry.leaf == kNone) break;
      const auto [r, c] = cell_of(entry.leaf, entry.partner);
      const double v = state[entry.leaf];
      flow[r][c] += v;
      state = step(state, entry.leaf, entry.partner);
    }
    return flow;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  struct Entry {
    double cost;
    std::size_t leaf;
    std::size_t partner;
  };

  [[nodiscard]] std::pair<std::size_t, std::size_t> cell_of(std::size_t a, std::size_t b) const {
    return a < rows_ ? std::pair{a, b - rows_} : std::pair{b, a - rows_};
  }

  [[nodiscard]] static bool spent(double v) { return v <= 1e-12; }

  [[nodiscard]] static std::vector<double> step(std::vector<double> state, std::size_t leaf, std::size_t partner) {
    state[partner] -= state[leaf];
    if (spent(state[partner])) state[partner] = 0.0;
    state[leaf] = 0.0;
    return state;
  }

  double search(const std::vector<double>& state) {
    if (auto it = memo_.find(state); it != memo_.end()) return it->second.cost;
    Entry entry{std::numeric_limits<double>::infinity(), kNone, kNone};
    bool done = true;
    for (std::size_t leaf = 0; leaf < state.size(); ++leaf) {
      if (spent(state[leaf])) continue;
      done = false;
      const bool is_row = leaf < rows_;
      const std::size_t lo = is_row ? rows_ : 0;
      const std::size_t hi = is_row ? state.size() : rows_;
      for (std::size_t partner = lo; partner < hi; ++partner) {
        if (state[partner] < state[leaf] - 1e-12) continue;
        const auto [r, c] = cell_of(leaf, partner);
        if (!std::isfinite(costs_[r][c])) continue;
        const double cost = costs_[r][c] * state[leaf] + search(step(state, leaf, partner));
        if (cost < entry.cost) entry = {cost, leaf, partner};
      }
    }
    if (done) entry.cost = 0.0;
    memo_.emplace(state, entry);
    return entry.cost;
  }

  std::size_t rows_;
  std::vector<double> amounts_;
  std::vector<std::vector<double>> costs_;
  struct StateHash {
    std::size_t operator()(const std::vector<double>& v) const noexcept {
      std::size_t h = v.size();
      for (double x : v) h = h * 1000003u ^ std::hash<double>{}(x);
      return h;
    }
  };
  std::unordered_map<std::vector<double>, Entry, StateHash> memo_;
};

}  // namespace detail

/// Optimal allocation by enumerating every basic solution. Refuses instances
/// with more than four prosumer buyers or sellers.
inline AllocationMatrix brute_force_allocation(std::span<const double> buyer_demands,
                                               std::span<const double> seller_supplies,
                                               const CostMatrix& costs,
                                               const ConnectivityMatrix& cm) {
  const std::size_t nb = buyer_demands.size();
  const std::size_t ns = seller_supplies.size();
  if (nb > kOracleMaxSide || ns > kOracleMaxSide) {
    throw StructuralError("brute-force oracle is limited to 4 buyers x 4 sellers");
  }
  if (!costs.same_shape(nb, ns) || !cm.same_shape(nb, ns)) {
    throw StructuralError("cost/connectivity matrices do not match the instance");
  }
  detail::require_positive_finite(buyer_demands, "buyer demands");
  detail::require_positive_finite(seller_supplies, "seller supplies");

  const double demand_total = std::accumulate(buyer_demands.begin(), buyer_demands.end(), 0.0);
  const double supply_total = std::accumulate(seller_supplies.begin(), seller_supplies.end(), 0.0);

  std::vector<double> rows(buyer_demands.begin(), buyer_demands.end());
  rows.push_back(supply_total);
  std::vector<double> cols(seller_supplies.begin(), seller_supplies.end());
  cols.push_back(demand_total);

  constexpr double kAbsent = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> cell_costs(nb + 1, std::vector<double>(ns + 1, kAbsent));
  for (std::size_t b = 0; b <= nb; ++b) {
    for (std::size_t s = 0; s <= ns; ++s) {
      if (b == nb && s == ns) cell_costs[b][s] = 0.0;
      else if (cm.connected(b, s)) cell_costs[b][s] = costs.at(b, s);
    }
  }

  const auto flow = detail::LeafPeelingSearch(rows, cols, cell_costs).best();
  AllocationMatrix result(nb, ns);
  for (std::size_t b = 0; b <= nb; ++b) {
    for (std::size_t s = 0; s <= ns; ++s) {
      if (b == nb && s == ns) continue;
      result.at(b, s) = flow[b][s];
    }
  }
  return result;
}

}  // namespace coopex
