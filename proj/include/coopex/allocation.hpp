#pragma once

// Per-interval clearing: a transportation problem between buyers and sellers
// where the grid is an unconstrained source and sink whose arcs cost big_m.
// Solved as a min-cost flow with successive shortest paths on integer data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "coopex/error.hpp"
#include "coopex/market.hpp"
#include "json.hpp"

namespace coopex {

/// Fixed-point resolution of quantities inside the solver (nano-kWh).
inline constexpr double kQuantaPerKwh = 1e9;
/// Fixed-point resolution of arc costs inside the solver.
inline constexpr double kCostQuanta = 1e6;

/// Dense (buyers + grid) x (sellers + grid) table; the grid is the last row
/// and the last column.
template <typename T>
class BuyerSellerTable {
 public:
  BuyerSellerTable() = default;
  BuyerSellerTable(std::size_t n_buyers, std::size_t n_sellers, T fill)
      : n_buyers_(n_buyers), n_sellers_(n_sellers), entries_((n_buyers + 1) * (n_sellers + 1), fill) {}

  [[nodiscard]] std::size_t n_buyers() const noexcept { return n_buyers_; }
  [[nodiscard]] std::size_t n_sellers() const noexcept { return n_sellers_; }
  [[nodiscard]] std::size_t rows() const noexcept { return n_buyers_ + 1; }
  [[nodiscard]] std::size_t cols() const noexcept { return n_sellers_ + 1; }
  [[nodiscard]] std::size_t grid_row() const noexcept { return n_buyers_; }
  [[nodiscard]] std::size_t grid_col() const noexcept { return n_sellers_; }

  [[nodiscard]] const T& at(std::size_t b, std::size_t s) const { return entries_.at(b * cols() + s); }
  T& at(std::size_t b, std::size_t s) { return entries_.at(b * cols() + s); }

  [[nodiscard]] bool same_shape(std::size_t n_buyers, std::size_t n_sellers) const noexcept {
    return n_buyers_ == n_buyers && n_sellers_ == n_sellers;
  }

  friend bool operator==(const BuyerSellerTable&, const BuyerSellerTable&) = default;

 protected:
  std::size_t n_buyers_ = 0;
  std::size_t n_sellers_ = 0;
  std::vector<T> entries_;
};

/// CM(b, s): whether buyer b may trade with seller s. Grid arcs are always on.
class ConnectivityMatrix : public BuyerSellerTable<char> {
 public:
  ConnectivityMatrix() = default;
  ConnectivityMatrix(std::size_t n_buyers, std::size_t n_sellers)
      : BuyerSellerTable(n_buyers, n_sellers, 1) {}

  static ConnectivityMatrix fully_connected(std::size_t n_buyers, std::size_t n_sellers) {
    return ConnectivityMatrix(n_buyers, n_sellers);
  }

  [[nodiscard]] bool connected(std::size_t b, std::size_t s) const { return at(b, s) != 0; }

  void disconnect(std::size_t b, std::size_t s) {
    if (b == grid_row() || s == grid_col()) {
      throw StructuralError("grid arcs cannot be disconnected");
    }
    at(b, s) = 0;
  }
};

/// Per-unit costs: the seller's efficiency on local arcs, big_m on grid arcs.
class CostMatrix : public BuyerSellerTable<double> {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t n_buyers, std::size_t n_sellers, double big_m)
      : BuyerSellerTable(n_buyers, n_sellers, big_m), big_m_(big_m) {}

  [[nodiscard]] double big_m() const noexcept { return big_m_; }

 private:
  double big_m_ = 0.0;
};

/// ex_b(s) in kWh. The grid-to-grid cell is always zero.
class AllocationMatrix : public BuyerSellerTable<double> {
 public:
  AllocationMatrix() = default;
  AllocationMatrix(std::size_t n_buyers, std::size_t n_sellers)
      : BuyerSellerTable(n_buyers, n_sellers, 0.0) {}

  /// Energy buyer b receives from prosumer sellers.
  [[nodiscard]] double local_received(std::size_t b) const {
    double sum = 0.0;
    for (std::size_t s = 0; s < n_sellers_; ++s) sum += at(b, s);
    return sum;
  }
  /// Energy seller s delivers to prosumer buyers.
  [[nodiscard]] double local_delivered(std::size_t s) const {
    double sum = 0.0;
    for (std::size_t b = 0; b < n_buyers_; ++b) sum += at(b, s);
    return sum;
  }
  [[nodiscard]] double from_grid(std::size_t b) const { return at(b, grid_col()); }
  [[nodiscard]] double to_grid(std::size_t s) const { return at(grid_row(), s); }

  [[nodiscard]] double row_sum(std::size_t b) const { return local_received(b) + from_grid(b); }
  [[nodiscard]] double col_sum(std::size_t s) const { return local_delivered(s) + to_grid(s); }

  [[nodiscard]] double total_grid_flow() const {
    double sum = 0.0;
    for (std::size_t b = 0; b < n_buyers_; ++b) sum += from_grid(b);
    for (std::size_t s = 0; s < n_sellers_; ++s) sum += to_grid(s);
    return sum;
  }

  [[nodiscard]] double objective(const CostMatrix& costs) const {
    if (!costs.same_shape(n_buyers_, n_sellers_)) {
      throw StructuralError("cost matrix shape does not match the allocation");
    }
    double sum = 0.0;
    for (std::size_t b = 0; b < rows(); ++b) {
      for (std::size_t s = 0; s < cols(); ++s) sum += costs.at(b, s) * at(b, s);
    }
    return sum;
  }
};

/// Smallest admissible big_m is anything strictly above this value.
inline double big_m_dominance_bound(std::size_t n_participants, double max_total_offered) {
  return static_cast<double>(n_participants) * max_total_offered * 1.0;
}

inline CostMatrix build_cost_matrix(std::span<const double> seller_etas, std::size_t n_buyers,
                                    const ConnectivityMatrix& cm, double big_m) {
  const std::size_t n_sellers = seller_etas.size();
  if (!cm.same_shape(n_buyers, n_sellers)) {
    throw StructuralError("connectivity matrix shape does not match buyers x sellers");
  }
  for (double eta : seller_etas) require_efficiency(eta);
  const auto n_participants = n_buyers + n_sellers + 1;
  if (!std::isfinite(big_m) || big_m <= static_cast<double>(n_participants)) {
    throw NumericError("big_m must be finite and exceed the number of participants");
  }
  CostMatrix costs(n_buyers, n_sellers, big_m);
  for (std::size_t b = 0; b < n_buyers; ++b) {
    for (std::size_t s = 0; s < n_sellers; ++s) costs.at(b, s) = seller_etas[s];
  }
  return costs;
}

namespace detail {

/// Min-cost flow by successive shortest paths. Dijkstra over reduced costs
/// with dense node selection; the graphs here have a few dozen nodes.
class SuccessivePathSolver {
 public:
  using flow_t = std::int64_t;
  using cost_t = std::int64_t;
  static constexpr flow_t kUnbounded = std::numeric_limits<flow_t>::max() / 4;

  explicit SuccessivePathSolver(std::size_t n_nodes) : adjacency_(n_nodes) {}

  std::size_t add_arc(std::size_t from, std::size_t to, flow_t capacity, cost_t cost) {
    const std::size_t id = arcs_.size();
    arcs_.push_back({to, capacity, cost});
    arcs_.push_back({from, 0, -cost});
    adjacency_[from].push_back(id);
    adjacency_[to].push_back(id + 1);
    return id;
  }

  [[nodiscard]] flow_t flow(std::size_t arc_id) const { return arcs_[arc_id ^ 1].residual; }

  /// Pushes as much flow as possible from source to sink at minimum cost.
  flow_t run(std::size_t source, std::size_t sink) {
    const std::size_t n = adjacency_.size();
    constexpr cost_t kInf = std::numeric_limits<cost_t>::max() / 4;
    std::vector<cost_t> potential(n, 0), dist(n);
    std::vector<std::size_t> via_arc(n);
    std::vector<char> done(n);
    flow_t total = 0;
    while (true) {
      std::fill(dist.begin(), dist.end(), kInf);
      std::fill(done.begin(), done.end(), 0);
      dist[source] = 0;
      while (true) {
        std::size_t u = n;
        for (std::size_t v = 0; v < n; ++v) {
          if (!done[v] && dist[v] < kInf && (u == n || dist[v] < dist[u])) u = v;
        }
        if (u == n) break;
        done[u] = 1;
        for (std::size_t id : adjacency_[u]) {
          const Arc& a = arcs_[id];
          if (a.residual == 0) continue;
          const cost_t candidate = dist[u] + a.cost + potential[u] - potential[a.to];
          if (candidate < dist[a.to]) {
            dist[a.to] = candidate;
            via_arc[a.to] = id;
          }
        }
      }
      if (dist[sink] >= kInf) break;
      for (std::size_t v = 0; v < n; ++v) potential[v] += std::min(dist[v], dist[sink]);

      flow_t push = kUnbounded;
      for (std::size_t v = sink; v != source; v = arcs_[via_arc[v] ^ 1].to) {
        push = std::min(push, arcs_[via_arc[v]].residual);
      }
      for (std::size_t v = sink; v != source; v = arcs_[via_arc[v] ^ 1].to) {
        arcs_[via_arc[v]].residual -= push;
        arcs_[via_arc[v] ^ 1].residual += push;
      }
      total += push;
    }
    return total;
  }

 private:
  struct Arc {
    std::size_t to;
    flow_t residual;
    cost_t cost;
  };
  std::vector<Arc> arcs_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

inline std::int64_t to_quanta(double kwh) { return std::llround(kwh * kQuantaPerKwh); }

inline void require_positive_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + " contains a non-finite value");
    if (v <= 0.0) throw StructuralError(std::string(what) + " must be strictly positive");
  }
}

/// Flows come back rounded to the quantum. When the positive arcs form a
/// forest (the usual basic solution), recompute them from the real inputs by
/// peeling leaves, so rows and columns balance in floating point. Otherwise
/// the rounded flows are kept.
inline void rebalance_on_support(AllocationMatrix& x, std::span<const double> demands,
                                 std::span<const double> supplies) {
  const std::size_t nb = demands.size();
  const std::size_t ns = supplies.size();
  // Balanced form: rows are buyers plus the grid (absorbing exports), columns
  // sellers plus the grid (supplying imports); the grid-grid arc carries slack.
  const double demand_total = std::accumulate(demands.begin(), demands.end(), 0.0);
  const double supply_total = std::accumulate(supplies.begin(), supplies.end(), 0.0);
  std::vector<double> row_left(demands.begin(), demands.end());
  row_left.push_back(supply_total);
  std::vector<double> col_left(supplies.begin(), supplies.end());
  col_left.push_back(demand_total);

  double local = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t s = 0; s < ns; ++s) local += x.at(b, s);
  }
  struct Arc { std::size_t b, s; bool done; };
  std::vector<Arc> arcs;
  for (std::size_t b = 0; b <= nb; ++b) {
    for (std::size_t s = 0; s <= ns; ++s) {
      const bool slack = b == nb && s == ns;
      if (slack ? local > 0.0 : x.at(b, s) > 0.0) arcs.push_back({b, s, false});
    }
  }
  std::vector<std::size_t> row_deg(nb + 1, 0), col_deg(ns + 1, 0);
  for (const auto& a : arcs) ++row_deg[a.b], ++col_deg[a.s];

  std::vector<double> flow(arcs.size(), 0.0);
  std::size_t resolved = 0;
  for (bool progress = true; progress && resolved < arcs.size();) {
    progress = false;
    for (std::size_t k = 0; k < arcs.size(); ++k) {
      auto& a = arcs[k];
      if (a.done) continue;
      double f;
      if (row_deg[a.b] == 1) f = row_left[a.b];
      else if (col_deg[a.s] == 1) f = col_left[a.s];
      else continue;
      f = std::max(0.0, f);
      flow[k] = f;
      row_left[a.b] -= f;
      col_left[a.s] -= f;
      --row_deg[a.b];
      --col_deg[a.s];
      a.done = true;
      ++resolved;
      progress = true;
    }
  }
  if (resolved < arcs.size()) return;  // cycle in the support
  for (std::size_t k = 0; k < arcs.size(); ++k) {
    if (arcs[k].b == nb && arcs[k].s == ns) continue;
    x.at(arcs[k].b, arcs[k].s) = flow[k];
  }
}

}  // namespace detail

/// Optimal allocation: grid flow is minimised first, then the
/// efficiency-weighted local volume. Among equal optima flow goes to the lower
/// seller index, then the lower buyer index.
inline AllocationMatrix solve_allocation(std::span<const double> buyer_demands,
                                         std::span<const double> seller_supplies,
                                         const CostMatrix& costs, const ConnectivityMatrix& cm) {
  using detail::SuccessivePathSolver;
  const std::size_t nb = buyer_demands.size();
  const std::size_t ns = seller_supplies.size();
  if (!costs.same_shape(nb, ns) || !cm.same_shape(nb, ns)) {
    throw StructuralError("cost/connectivity matrices do not match " + std::to_string(nb) +
                          " buyers x " + std::to_string(ns) + " sellers");
  }
  detail::require_positive_finite(buyer_demands, "buyer demands");
  detail::require_positive_finite(seller_supplies, "seller supplies");
  for (std::size_t b = 0; b <= nb; ++b) {
    for (std::size_t s = 0; s <= ns; ++s) {
      const double c = costs.at(b, s);
      if (!std::isfinite(c) || c < 0.0) throw NumericError("cost entries must be finite and >= 0");
    }
    if (!cm.connected(b, ns)) throw StructuralError("grid arcs must stay connected");
  }
  for (std::size_t s = 0; s < ns; ++s) {
    if (!cm.connected(nb, s)) throw StructuralError("grid arcs must stay connected");
  }

  const double demand_total = std::accumulate(buyer_demands.begin(), buyer_demands.end(), 0.0);
  const double supply_total = std::accumulate(seller_supplies.begin(), seller_supplies.end(), 0.0);
  const double bound = big_m_dominance_bound(nb + ns + 1, std::max(demand_total, supply_total));
  if (!(costs.big_m() > bound)) {
    throw NumericError("big_m " + std::to_string(costs.big_m()) +
                       " does not dominate local costs (needs > " + std::to_string(bound) + ")");
  }

  // Node layout: source, sellers, grid, buyers, sink.
  const std::size_t source = 0;
  const std::size_t grid = ns + 1;
  const std::size_t sink = ns + nb + 2;
  auto seller_node = [](std::size_t s) { return s + 1; };
  auto buyer_node = [&](std::size_t b) { return ns + 2 + b; };
  const std::size_t n_nodes = ns + nb + 3;

  // Integer arc cost: quantised cost scaled by `scale`, plus an index term
  // small enough that it only ranks otherwise equal-cost solutions.
  const auto tie_span = static_cast<std::int64_t>((ns + 1) * (nb + 1));
  const std::int64_t scale = static_cast<std::int64_t>(n_nodes) * tie_span + 1;
  const double max_cost_quanta = costs.big_m() * kCostQuanta;
  if (max_cost_quanta * static_cast<double>(scale) * static_cast<double>(n_nodes) * 4.0 >
      static_cast<double>(std::numeric_limits<std::int64_t>::max())) {
    throw NumericError("big_m too large for exact integer pivoting");
  }
  auto arc_cost = [&](std::size_t b, std::size_t s) -> std::int64_t {
    const auto quantised = std::llround(costs.at(b, s) * kCostQuanta);
    return quantised * scale + static_cast<std::int64_t>(s * (nb + 1) + b);
  };

  SuccessivePathSolver solver(n_nodes);
  std::vector<std::int64_t> demand_q(nb), supply_q(ns);
  std::int64_t demand_q_total = 0, supply_q_total = 0;
  for (std::size_t b = 0; b < nb; ++b) demand_q_total += demand_q[b] = detail::to_quanta(buyer_demands[b]);
  for (std::size_t s = 0; s < ns; ++s) supply_q_total += supply_q[s] = detail::to_quanta(seller_supplies[s]);

  for (std::size_t s = 0; s < ns; ++s) solver.add_arc(source, seller_node(s), supply_q[s], 0);
  for (std::size_t b = 0; b < nb; ++b) solver.add_arc(buyer_node(b), sink, demand_q[b], 0);
  if (demand_q_total > supply_q_total) solver.add_arc(source, grid, demand_q_total - supply_q_total, 0);
  if (supply_q_total > demand_q_total) solver.add_arc(grid, sink, supply_q_total - demand_q_total, 0);

  constexpr auto kUnbounded = SuccessivePathSolver::kUnbounded;
  std::vector<std::size_t> local_arc((nb + 1) * (ns + 1), SIZE_MAX);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t b = 0; b < nb; ++b) {
      if (cm.connected(b, s)) {
        local_arc[b * (ns + 1) + s] = solver.add_arc(seller_node(s), buyer_node(b), kUnbounded, arc_cost(b, s));
      }
    }
    local_arc[nb * (ns + 1) + s] = solver.add_arc(seller_node(s), grid, kUnbounded, arc_cost(nb, s));
  }
  for (std::size_t b = 0; b < nb; ++b) {
    local_arc[b * (ns + 1) + ns] = solver.add_arc(grid, buyer_node(b), kUnbounded, arc_cost(b, ns));
  }

  const auto pushed = solver.run(source, sink);
  if (pushed != std::max(demand_q_total, supply_q_total)) {
    throw StructuralError("allocation instance is infeasible");
  }

  AllocationMatrix result(nb, ns);
  for (std::size_t b = 0; b <= nb; ++b) {
    for (std::size_t s = 0; s <= ns; ++s) {
      const std::size_t id = local_arc[b * (ns + 1) + s];
      if (id != SIZE_MAX) result.at(b, s) = static_cast<double>(solver.flow(id)) / kQuantaPerKwh;
    }
  }
  detail::rebalance_on_support(result, buyer_demands, seller_supplies);
  return result;
}

/// Instance dump for failure triage.
inline nlohmann::json allocation_instance_json(std::span<const double> buyer_demands,
                                               std::span<const double> seller_supplies,
                                               const CostMatrix& costs,
                                               const AllocationMatrix& solution) {
  auto table = [](const auto& m) {
    auto rows = nlohmann::json::array();
    for (std::size_t b = 0; b < m.rows(); ++b) {
      auto row = nlohmann::json::array();
      for (std::size_t s = 0; s < m.cols(); ++s) row.push_back(m.at(b, s));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  return {{"demands", std::vector<double>(buyer_demands.begin(), buyer_demands.end())},
          {"supplies", std::vector<double>(seller_supplies.begin(), seller_supplies.end())},
          {"big_m", costs.big_m()},
          {"costs", table(costs)},
          {"solution", table(solution)},
          {"objective", solution.objective(costs)}};
}

}  // namespace coopex
