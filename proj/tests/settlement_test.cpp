#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "coopex/scenario.hpp"
#include "coopex/settlement.hpp"

using namespace coopex;
using Catch::Approx;

namespace {

// One charge interval followed by `tail` further intervals of the given net.
ProsumerProfile cycle_profile(std::string id, double tail_net, std::size_t tail = 1) {
  ProsumerProfile p;
  p.id = std::move(id);
  p.battery.round_trip_eta = 0.81;
  p.battery.degradation_frac = 0.0;
  p.battery.charge_limit_kw = 8.0;
  p.battery.discharge_limit_kw = 8.0;
  p.demand_kwh = {0.0};
  p.pv_kwh = {1.0};
  for (std::size_t t = 0; t < tail; ++t) {
    p.demand_kwh.push_back(tail_net > 0 ? tail_net : 0.0);
    p.pv_kwh.push_back(tail_net < 0 ? -tail_net : 0.0);
  }
  return p;
}

ScenarioConfig synthetic(std::size_t n, std::uint64_t seed, std::size_t days = 2) {
  ScenarioConfig c;
  c.n_prosumers = n;
  c.days = days;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("agent loss: idle battery") {
  Scenario sc;
  sc.prosumers = {cycle_profile("a", 0.0)};
  sc.prosumers[0].pv_kwh[0] = 0.0;
  const auto trace = run_simulation(sc, Mechanism::individual);
  CHECK(agent_loss(trace, 0) == 0.0);
}

TEST_CASE("agent loss: full cycle at 81% round trip") {
  Scenario sc;
  // 1.0 in, then 0.81 out brings the SOC back to where it started.
  sc.prosumers = {cycle_profile("a", 0.81)};
  const auto trace = run_simulation(sc, Mechanism::individual);
  const auto& p = trace.of(0);
  CHECK(p.records[0].battery == Approx(1.0));
  CHECK(p.records[1].battery == Approx(-0.81));
  CHECK(p.restoration_offset == Approx(0.0).margin(1e-12));
  CHECK(agent_loss(trace, 0) == Approx(0.19).epsilon(1e-12));
}

TEST_CASE("agent loss: stranded charge") {
  Scenario sc;
  sc.prosumers = {cycle_profile("a", 0.0)};
  const auto trace = run_simulation(sc, Mechanism::individual);
  // SOC rises by sqrt(0.81) * 1.0 = 0.9; restoring it would deliver 0.9 * 0.9.
  CHECK(trace.of(0).total_battery() == Approx(1.0));
  CHECK(trace.of(0).restoration_offset == Approx(-0.81).epsilon(1e-12));
  CHECK(agent_loss(trace, 0) == Approx(0.19).epsilon(1e-12));
}

TEST_CASE("system loss adds agent losses") {
  Scenario sc;
  sc.prosumers = {cycle_profile("a", 0.81), cycle_profile("b", 0.81)};
  const auto trace = run_simulation(sc, Mechanism::individual);
  CHECK(system_loss(trace) == Approx(0.38).epsilon(1e-12));
  CHECK(system_loss(run_simulation(sc, Mechanism::no_flexibility)) == 0.0);

  Scenario one;
  one.prosumers = {cycle_profile("a", 0.81)};
  const auto single = run_simulation(one, Mechanism::individual);
  CHECK(system_loss(single) == agent_loss(single, 0));
}

TEST_CASE("marginal losses") {
  const auto sc = build_scenario(synthetic(4, 3));
  for (std::size_t i = 0; i < 4; ++i) CHECK(marginal_loss(sc, Mechanism::no_flexibility, i) == 0.0);

  // Nobody ever sells, so nobody interacts: each marginal is the own loss.
  Scenario buyers;
  buyers.prosumers = {cycle_profile("a", 0.5, 3), cycle_profile("b", 0.3, 3), cycle_profile("c", 0.9, 3)};
  for (auto& p : buyers.prosumers) p.pv_kwh[0] = 0.0, p.demand_kwh[0] = 0.1;
  const auto full = run_simulation(buyers, Mechanism::exchange);
  const auto m = marginal_losses(buyers, Mechanism::exchange, full);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(m[i] == Approx(agent_loss(full, i)).margin(1e-12));
    CHECK(m[i] == Approx(marginal_loss(buyers, Mechanism::exchange, i)).margin(1e-15));
  }

  Scenario twins;
  twins.prosumers = {cycle_profile("a", -0.2, 4), cycle_profile("b", -0.2, 4)};
  twins.prosumers[0].demand_kwh[2] = twins.prosumers[1].demand_kwh[2] = 0.7;
  twins.prosumers[0].pv_kwh[2] = twins.prosumers[1].pv_kwh[2] = 0.0;
  CHECK(marginal_loss(twins, Mechanism::exchange, 0) == marginal_loss(twins, Mechanism::exchange, 1));
}

TEST_CASE("softmax weights") {
  const std::vector<double> zeros{0, 0, 0};
  for (double w : softmax_weights(zeros)) CHECK(w == Approx(1.0 / 3.0).epsilon(1e-15));

  const std::vector<double> ln2{std::log(2.0), 0.0};
  const auto w = softmax_weights(ln2);
  CHECK(w[0] == Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(w[1] == Approx(1.0 / 3.0).epsilon(1e-15));

  const std::vector<double> wide{1000.0, 0.0};
  const auto big = softmax_weights(wide);
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == Approx(1.0));
  CHECK(big[1] == Approx(0.0).margin(1e-300));

  const std::vector<double> bad{0.0, NAN};
  CHECK_THROWS_AS(softmax_weights(bad), NumericError);
}

TEST_CASE("softmax is shift invariant") {
  const std::vector<double> base{0.3, -1.2, 2.5, 0.0, 0.7};
  const auto w = softmax_weights(base);
  for (double c : {-50.0, -1.0, 3.0, 400.0}) {
    auto shifted = base;
    for (double& x : shifted) x += c;
    const auto ws = softmax_weights(shifted);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(ws[i] - w[i]) <= 1e-12);
  }
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("component rewards") {
  const std::vector<double> ones{1.0, 1.0}, halves{0.5, 0.5};
  for (double r : component_rewards(ones, halves, 2.0)) CHECK(r == 0.0);

  const std::vector<double> losses{0.3, 0.1};
  const std::vector<double> marginals{0.3, -0.7};
  const auto w = softmax_weights(marginals);
  // e / (1 + e)
  CHECK(w[0] == Approx(std::exp(1.0) / (1.0 + std::exp(1.0))).epsilon(1e-15));
  const auto r = component_rewards(losses, w, 0.4);
  CHECK(std::abs(r[0] + r[1]) <= 1e-12);
  CHECK(r[0] == Approx(0.3 - w[0] * 0.4));

  const std::vector<double> zero{0.0, 0.0};
  const auto same = component_rewards(zero, halves, 0.0);
  CHECK(same == zero);

  const std::vector<double> lopsided{0.6, 0.6};
  CHECK_THROWS_AS(component_rewards(ones, lopsided, 2.0), SettlementError);
  CHECK_THROWS_AS(component_rewards(ones, halves, 3.0), SettlementError);
}

TEST_CASE("utility") {
  ProsumerTrace t;
  t.records.push_back(settle_record(10.0, 0.0, 0.0, 0.0, 0.0));
  CHECK(utility(t, Mechanism::no_flexibility, 0.8, 1.0) == -10.0);

  ProsumerTrace buyer;
  buyer.records.push_back(settle_record(12.0, 0.0, 2.0, 0.0, 0.0));
  CHECK(buyer.total_grid_import() == 10.0);
  CHECK(utility(buyer, Mechanism::exchange, 0.8, 1.0, 0.5) == Approx(-11.5).epsilon(1e-15));

  ProsumerTrace seller;
  seller.records.push_back(settle_record(0.0, 2.0, -2.0, 0.0, 0.0));
  CHECK(utility(seller, Mechanism::exchange, 0.8, 1.0) == Approx(1.6).epsilon(1e-15));

  CHECK_THROWS_AS(utility(seller, Mechanism::exchange, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(utility(seller, Mechanism::exchange, -0.1, 1.0), ConfigError);
  CHECK_THROWS_AS(utility(seller, Mechanism::exchange, 0.5, 0.0), ConfigError);

  // Buyers lose and sellers gain as alpha rises.
  CHECK(utility(buyer, Mechanism::exchange, 0.9, 1.0) <= utility(buyer, Mechanism::exchange, 0.1, 1.0));
  CHECK(utility(seller, Mechanism::exchange, 0.9, 1.0) >= utility(seller, Mechanism::exchange, 0.1, 1.0));
}

TEST_CASE("find_alpha") {
  SECTION("indifferent agents") {
    const std::vector<RationalityInputs> a{{5, 5, 5, 0, 0}, {3, 3, 3, 0, 0}};
    const auto c = find_alpha(a, 0.9);
    CHECK(c.feasible);
    CHECK(c.alpha == 0.0);
  }
  SECTION("buyer caps alpha at one half") {
    // Grid 11 -> 10 with 2 kWh received: alpha * 2 <= 1.
    const std::vector<RationalityInputs> a{{11, 11, 10, 2, 0}};
    const auto c = find_alpha(a, 0.9);
    CHECK(c.feasible);
    CHECK(c.alpha == 0.0);
    CHECK(c.upper == Approx(0.5));
  }
  SECTION("conflicting buyer and seller") {
    // Buyer: alpha <= 0.4. Seller delivering 1 kWh with a 0.6 grid penalty: alpha >= 0.6.
    const std::vector<RationalityInputs> a{{10.4, 10.4, 10, 1, 0}, {0, 0, 0.6, -1, 0}};
    const auto c = find_alpha(a, 0.9);
    CHECK_FALSE(c.feasible);
    CHECK(c.alpha == 0.9);
    CHECK(c.lower == Approx(0.6));
    CHECK(c.upper == Approx(0.4));
  }
  SECTION("flat agent that loses regardless") {
    const std::vector<RationalityInputs> a{{5, 5, 6, 0, 0}};
    CHECK_FALSE(find_alpha(a, 0.9).feasible);
  }
  SECTION("lower bound at or above one") {
    const std::vector<RationalityInputs> a{{0, 0, 2, -1, 0}};
    CHECK_FALSE(find_alpha(a, 0.9).feasible);
  }
}

TEST_CASE("welfare and fairness") {
  const std::vector<double> u{-1, -2, -3};
  CHECK(social_welfare(u) == -6.0);
  const std::vector<double> z{0, 0};
  CHECK(social_welfare(z) == 0.0);
  const std::vector<double> one{-4.5};
  CHECK(social_welfare(one) == -4.5);

  const std::vector<double> base{0, 0, 0}, up1{1, 1, 1};
  const auto f1 = nash_fairness(up1, base);
  CHECK(f1.defined);
  CHECK(f1.log_value == 0.0);
  const std::vector<double> b2{1, 1}, m2{3, 6};
  const auto f2 = nash_fairness(m2, b2);
  CHECK(f2.log_value == Approx(std::log(10.0)).epsilon(1e-15));
  const std::vector<double> m3{1, 7};
  CHECK_FALSE(nash_fairness(m3, b2).defined);
  CHECK_THROWS_AS(nash_fairness(m3, base), SettlementError);
}

TEST_CASE("settlement identities on synthetic cooperatives") {
  for (std::uint64_t seed : {1u, 5u}) {
    const auto config = synthetic(5, seed);
    const auto settled = settle(build_scenario(config), {config.price, config.alpha_default});
    const auto& r = settled.report;
    double w = 0.0, rewards = 0.0, losses = 0.0;
    for (const auto& a : r.agents) {
      w += a.weight;
      rewards += a.reward;
      losses += a.loss;
    }
    CHECK(std::abs(w - 1.0) <= 1e-9);
    CHECK(std::abs(rewards) <= 1e-9);
    CHECK(std::abs(losses - r.system_loss) <= 1e-9);
    CHECK((r.alpha.alpha >= 0.0 && r.alpha.alpha < 1.0));

    // Exchange and reward transfers cancel, so welfare moves only with grid cost.
    double grid0 = 0.0, grid2 = 0.0;
    for (const auto& a : r.agents) grid0 += a.grid[0], grid2 += a.grid[2];
    CHECK(r.social_welfare[2] - r.social_welfare[0] == Approx(-r.price * (grid2 - grid0)).margin(1e-9));

    if (r.alpha.feasible) {
      for (const auto& a : r.agents) {
        CHECK(a.utility[2] >= a.utility[0] - 1e-9);
        CHECK(a.utility[2] >= a.utility[1] - 1e-9);
      }
    }
  }
}

TEST_CASE("settlement needs two prosumers") {
  const auto config = synthetic(1, 1, 1);
  CHECK_THROWS_AS(settle(build_scenario(config), {}), ConfigError);
}
