#include <catch_amalgamated.hpp>

#include <random>

#include "coopex/allocation.hpp"
#include "coopex/allocation_oracle.hpp"
#include "test_support.hpp"

using namespace coopex;
using coopex::testing::random_instance;
using coopex::testing::sum;

namespace {

constexpr double kBigM = 1000.0;

AllocationMatrix solve(std::vector<double> demands, std::vector<double> supplies, std::vector<double> etas,
                       double big_m = kBigM) {
  const auto cm = ConnectivityMatrix::fully_connected(demands.size(), supplies.size());
  const auto costs = build_cost_matrix(etas, demands.size(), cm, big_m);
  return solve_allocation(demands, supplies, costs, cm);
}

void check_balances(const AllocationMatrix& x, const std::vector<double>& demands,
                    const std::vector<double>& supplies, double tol) {
  for (std::size_t b = 0; b < demands.size(); ++b) CHECK(std::abs(x.row_sum(b) - demands[b]) <= tol);
  for (std::size_t s = 0; s < supplies.size(); ++s) CHECK(std::abs(x.col_sum(s) - supplies[s]) <= tol);
  CHECK(x.at(x.grid_row(), x.grid_col()) == 0.0);
}

}  // namespace

TEST_CASE("build_cost_matrix places efficiencies and big_m") {
  const auto cm1 = ConnectivityMatrix::fully_connected(1, 1);
  const std::vector<double> one{0.9};
  const auto c1 = build_cost_matrix(one, 1, cm1, kBigM);
  CHECK(c1.at(0, 0) == 0.9);
  CHECK(c1.at(0, 1) == kBigM);
  CHECK(c1.at(1, 0) == kBigM);
  CHECK(c1.at(1, 1) == kBigM);

  const auto cm0 = ConnectivityMatrix::fully_connected(1, 0);
  const auto c0 = build_cost_matrix(std::vector<double>{}, 1, cm0, kBigM);
  CHECK(c0.rows() == 2);
  CHECK(c0.cols() == 1);
  CHECK(c0.at(0, 0) == kBigM);
  CHECK(c0.at(1, 0) == kBigM);

  const auto cm2 = ConnectivityMatrix::fully_connected(2, 2);
  const std::vector<double> two{0.7, 0.9};
  const auto c2 = build_cost_matrix(two, 2, cm2, kBigM);
  CHECK(c2.at(0, 0) == 0.7);
  CHECK(c2.at(1, 0) == 0.7);
  CHECK(c2.at(0, 1) == 0.9);
  CHECK(c2.at(1, 1) == 0.9);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(c2.at(2, k) == kBigM);
    CHECK(c2.at(k, 2) == kBigM);
  }

  CHECK_THROWS_AS(build_cost_matrix(std::vector<double>{1.1}, 1, cm1, kBigM), InvalidEfficiency);
  CHECK_THROWS_AS(build_cost_matrix(std::vector<double>{0.0}, 1, cm1, kBigM), InvalidEfficiency);
  CHECK_THROWS_AS(build_cost_matrix(one, 2, cm1, kBigM), StructuralError);
  CHECK_THROWS_AS(build_cost_matrix(one, 1, cm1, 2.0), NumericError);
}

TEST_CASE("grid arcs cannot be disconnected") {
  auto cm = ConnectivityMatrix::fully_connected(2, 2);
  CHECK_THROWS_AS(cm.disconnect(2, 0), StructuralError);
  CHECK_THROWS_AS(cm.disconnect(0, 2), StructuralError);
  cm.disconnect(0, 1);
  CHECK_FALSE(cm.connected(0, 1));
}

TEST_CASE("solve_allocation worked examples") {
  SECTION("exact bilateral match") {
    const auto x = solve({5}, {5}, {0.9});
    CHECK(x.at(0, 0) == 5.0);
    CHECK(x.from_grid(0) == 0.0);
    CHECK(x.to_grid(0) == 0.0);
  }
  SECTION("buyer prefers the less efficient seller") {
    // Bases of the 1x2 instance: {local from s0, s1 to grid} costs
    // 5*0.7 + 5M; {local from s1, s0 to grid} costs 5*0.9 + 5M.
    const auto x = solve({5}, {5, 5}, {0.7, 0.9});
    CHECK(x.at(0, 0) == 5.0);
    CHECK(x.at(0, 1) == 0.0);
    CHECK(x.to_grid(0) == 0.0);
    CHECK(x.to_grid(1) == 5.0);
    const auto cm = ConnectivityMatrix::fully_connected(1, 2);
    const auto costs = build_cost_matrix(std::vector<double>{0.7, 0.9}, 1, cm, kBigM);
    CHECK(x.objective(costs) == Catch::Approx(5 * 0.7 + 5 * kBigM).epsilon(1e-15));
  }
  SECTION("shortfall drawn from the grid") {
    const auto x = solve({8}, {5}, {0.9});
    CHECK(x.at(0, 0) == 5.0);
    CHECK(x.from_grid(0) == 3.0);
  }
  SECTION("no sellers") {
    const auto x = solve({2, 3}, {}, {});
    CHECK(x.from_grid(0) == 2.0);
    CHECK(x.from_grid(1) == 3.0);
  }
  SECTION("no buyers") {
    const auto x = solve({}, {4}, {0.8});
    CHECK(x.to_grid(0) == 4.0);
  }
}

TEST_CASE("equal-efficiency ties go to the lower index") {
  const auto by_seller = solve({5}, {5, 5}, {0.8, 0.8});
  CHECK(by_seller.at(0, 0) == 5.0);
  CHECK(by_seller.to_grid(1) == 5.0);

  const auto by_buyer = solve({3, 3}, {3}, {0.8});
  CHECK(by_buyer.at(0, 0) == 3.0);
  CHECK(by_buyer.from_grid(1) == 3.0);
}

TEST_CASE("solve_allocation rejects malformed instances") {
  const auto cm = ConnectivityMatrix::fully_connected(1, 1);
  const auto costs = build_cost_matrix(std::vector<double>{0.9}, 1, cm, kBigM);
  const std::vector<double> one{1.0}, two{1.0, 2.0}, zero{0.0}, nan{std::nan("")};
  CHECK_THROWS_AS(solve_allocation(two, one, costs, cm), StructuralError);
  CHECK_THROWS_AS(solve_allocation(zero, one, costs, cm), StructuralError);
  CHECK_THROWS_AS(solve_allocation(nan, one, costs, cm), NumericError);
  // big_m of 1000 cannot dominate 3 participants x 400 kWh.
  const std::vector<double> huge{400.0};
  CHECK_THROWS_AS(solve_allocation(huge, one, costs, cm), NumericError);
}

TEST_CASE("real-valued quantities balance within 1e-9") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> q(0.001, 3.0), eta(0.5, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> d(1 + trial % 7), s(1 + (trial / 7) % 7), e;
    for (auto& x : d) x = q(rng);
    for (auto& x : s) {
      x = q(rng);
      e.push_back(eta(rng));
    }
    const auto x = solve(d, s, e);
    check_balances(x, d, s, 1e-9);
    CHECK(std::abs(x.total_grid_flow() - std::abs(sum(d) - sum(s))) <= 1e-9);
  }
}

TEST_CASE("solver matches the exhaustive oracle") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const bool sparse = trial % 3 == 0;
    const auto inst = random_instance(rng, sparse);
    const auto fast = solve_allocation(inst.demands, inst.supplies, inst.costs, inst.cm);
    const auto slow = brute_force_allocation(inst.demands, inst.supplies, inst.costs, inst.cm);
    INFO("trial " << trial);
    CHECK(std::abs(fast.objective(inst.costs) - slow.objective(inst.costs)) <= 1e-9);
    check_balances(fast, inst.demands, inst.supplies, 0.0);
    for (std::size_t b = 0; b < fast.rows(); ++b) {
      for (std::size_t s = 0; s < fast.cols(); ++s) {
        CHECK(fast.at(b, s) >= 0.0);
        if (!inst.cm.connected(b, s)) CHECK(fast.at(b, s) == 0.0);
      }
    }
  }
}

TEST_CASE("optimal solutions never store a cheaper seller's surplus while a dearer one exports") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = random_instance(rng);
    const auto x = solve_allocation(inst.demands, inst.supplies, inst.costs, inst.cm);
    CHECK(std::abs(x.total_grid_flow() - std::abs(sum(inst.demands) - sum(inst.supplies))) <= 1e-9);
    for (std::size_t s1 = 0; s1 < inst.etas.size(); ++s1) {
      for (std::size_t s2 = 0; s2 < inst.etas.size(); ++s2) {
        if (inst.etas[s1] < inst.etas[s2]) {
          CHECK_FALSE((x.local_delivered(s2) > 0.0 && x.to_grid(s1) > 0.0));
        }
      }
    }
  }
}

TEST_CASE("brute-force oracle") {
  const auto cm = ConnectivityMatrix::fully_connected(1, 1);
  const auto costs = build_cost_matrix(std::vector<double>{0.6}, 1, cm, kBigM);
  const auto x = brute_force_allocation(std::vector<double>{4.0}, std::vector<double>{4.0}, costs, cm);
  CHECK(x.at(0, 0) == 4.0);

  const auto cm0 = ConnectivityMatrix::fully_connected(2, 0);
  const auto c0 = build_cost_matrix(std::vector<double>{}, 2, cm0, kBigM);
  const auto g = brute_force_allocation(std::vector<double>{1.0, 2.0}, std::vector<double>{}, c0, cm0);
  CHECK(g.from_grid(0) == 1.0);
  CHECK(g.from_grid(1) == 2.0);

  const auto cm5 = ConnectivityMatrix::fully_connected(5, 1);
  const auto c5 = build_cost_matrix(std::vector<double>{0.6}, 5, cm5, kBigM);
  const std::vector<double> five(5, 1.0);
  CHECK_THROWS_AS(brute_force_allocation(five, std::vector<double>{1.0}, c5, cm5), StructuralError);
}

TEST_CASE("instance dump carries the solution") {
  const std::vector<double> d{2.0}, s{1.0};
  const auto cm = ConnectivityMatrix::fully_connected(1, 1);
  const auto costs = build_cost_matrix(std::vector<double>{0.9}, 1, cm, kBigM);
  const auto x = solve_allocation(d, s, costs, cm);
  const auto j = allocation_instance_json(d, s, costs, x);
  CHECK(j.at("solution")[0][0].get<double>() == 1.0);
  CHECK(j.at("solution")[0][1].get<double>() == 1.0);
  CHECK(j.at("objective").get<double>() == Catch::Approx(0.9 + kBigM));
}
