#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "coopex/experiment.hpp"

using namespace coopex;

namespace {

ScenarioConfig small_loss_config() {
  ScenarioConfig c;
  c.days = 1;
  c.pool_size = 12;
  c.trials = 2;
  c.loss_population_sizes = {3, 5};
  c.eta_std_grid = {0.0, 0.1};
  return c;
}

}  // namespace

TEST_CASE("derive_seed spreads trial seeds") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(7, i));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
  CHECK(derive_seed(7, 3) != derive_seed(8, 3));
}

TEST_CASE("loss experiment layout and determinism") {
  const auto c = small_loss_config();
  const auto a = run_experiment_loss_reduction(c);
  REQUIRE(a.rows.size() == 2 * 2 * 2);
  REQUIRE(a.summary.size() == 4);
  for (const auto& r : a.rows) {
    CHECK(r.loss_reduction == r.loss_individual - r.loss_exchange);
    CHECK(r.loss_individual >= 0.0);
    CHECK_FALSE(r.alpha.has_value());
  }
  // The same trial seeds are used at every spread.
  CHECK(a.rows[0].seed == a.rows[2].seed);
  CHECK(a.rows[1].seed == a.rows[3].seed);
  CHECK(a.rows[0].seed != a.rows[1].seed);

  const auto b = run_experiment_loss_reduction(c);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].loss_individual == b.rows[i].loss_individual);
    CHECK(a.rows[i].loss_exchange == b.rows[i].loss_exchange);
  }
  for (const auto& s : a.summary) {
    double mean = 0.0;
    std::size_t nonneg = 0;
    for (const auto& r : a.rows) {
      if (r.n_prosumers == s.n_prosumers && r.eta_std == s.eta_std) {
        mean += r.loss_reduction / 2.0;
        nonneg += r.loss_reduction >= 0.0;
      }
    }
    CHECK(s.mean == Catch::Approx(mean).epsilon(1e-12));
    CHECK(s.non_negative == nonneg);
  }
}

TEST_CASE("a lone prosumer gains nothing from the exchange") {
  auto c = small_loss_config();
  c.loss_population_sizes = {1};
  for (const auto& r : run_experiment_loss_reduction(c).rows) CHECK(r.loss_reduction == 0.0);
}

TEST_CASE("identical households never trade") {
  ScenarioConfig c;
  c.n_prosumers = 2;
  c.days = 2;
  c.eta_std = 0.0;
  c.pv_shift_fraction = 0.0;
  auto one = synthesize_profiles(c).front();
  const auto sc = assemble_scenario(c, {one, one});
  const auto m1 = run_simulation(sc, Mechanism::individual);
  const auto m2 = run_simulation(sc, Mechanism::exchange);
  for (const auto& p : m2.prosumers) CHECK(p.total_exchange() == 0.0);
  CHECK(system_loss(m1) == system_loss(m2));
}

TEST_CASE("loss experiment reads a CSV pool") {
  auto c = small_loss_config();
  const auto path = std::filesystem::temp_directory_path() / "coopex_pool_test.csv";
  {
    ScenarioConfig pool = c;
    pool.n_prosumers = c.pool_size;
    std::ofstream out(path);
    const auto ps = synthesize_profiles(pool);
    write_profiles_csv(out, ps, pool.simulation_settings().start, pool.dt_hours);
  }
  const auto synthetic = run_experiment_loss_reduction(c);
  c.data_source = path.string();
  const auto from_file = run_experiment_loss_reduction(c);
  std::filesystem::remove(path);
  REQUIRE(from_file.rows.size() == synthetic.rows.size());
  for (std::size_t i = 0; i < synthetic.rows.size(); ++i) {
    CHECK(from_file.rows[i].loss_exchange == synthetic.rows[i].loss_exchange);
  }
}

TEST_CASE("welfare experiment") {
  ScenarioConfig c;
  c.n_prosumers = 6;
  c.days = 2;
  c.seed = 3;
  const auto r = run_experiment_welfare(c);
  REQUIRE(r.rows.size() == 1);
  REQUIRE(r.improvements.size() == 6);
  const auto& row = r.rows.front();
  REQUIRE(row.alpha.has_value());
  REQUIRE(row.social_welfare.has_value());
  if (row.alpha->feasible) {
    // Every prosumer sits on or above the equal-improvement line.
    for (const auto& p : r.improvements) {
      CHECK(p.exchange >= p.individual - 1e-9);
      CHECK(p.exchange >= -1e-9);
    }
    CHECK((*row.social_welfare)[2] >= (*row.social_welfare)[1] - 1e-9);
    CHECK((*row.social_welfare)[1] >= (*row.social_welfare)[0] - 1e-9);
  }

  c.n_prosumers = 1;
  CHECK_THROWS_AS(run_experiment_welfare(c), ConfigError);
}
