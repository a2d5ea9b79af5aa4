// coopex_cli: runs the market mechanisms and the two experiments, writing
// CSV or JSON reports into --out-dir.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "coopex/experiment.hpp"
#include "coopex/report_io.hpp"
#include "coopex/scenario.hpp"
#include "coopex/settlement.hpp"

namespace fs = std::filesystem;
using coopex::ScenarioConfig;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string format = "csv";
  bool dump_lp = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_dump) {
  cmd->add_option("--config", c.config_path, "scenario config JSON");
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out-dir", c.out_dir, "directory for report files");
  cmd->add_option("--format", c.format, "report format")->check(CLI::IsMember({"csv", "json"}));
  if (with_dump) cmd->add_flag("--dump-lp", c.dump_lp, "write every allocation instance to lp_dump.jsonl");
}

ScenarioConfig resolve_config(const Common& c) {
  ScenarioConfig config = c.config_path.empty() ? ScenarioConfig{} : coopex::load_config(c.config_path);
  if (c.seed) config.seed = *c.seed;
  config.validate();
  return config;
}

std::ofstream open_out(const Common& c, const std::string& name) {
  const auto path = fs::path(c.out_dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw coopex::Error("cannot write " + path.string());
  return out;
}

void prepare_out_dir(const Common& c, const ScenarioConfig& config) {
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (ec) throw coopex::Error("cannot create output directory " + c.out_dir + ": " + ec.message());
  open_out(c, "config.json") << nlohmann::json(config).dump(2) << '\n';
}

// Writes one JSON object per line; the file stays open for the whole run.
struct LpDump {
  std::optional<std::ofstream> file;

  explicit LpDump(const Common& c) {
    if (c.dump_lp) file = open_out(c, "lp_dump.jsonl");
  }
  coopex::AllocationObserver observer() {
    if (!file) return {};
    return [this](std::size_t t, const nlohmann::json& instance) {
      *file << nlohmann::json{{"t", t}, {"instance", instance}}.dump() << '\n';
    };
  }
};

void write_json(const Common& c, const std::string& name, const nlohmann::json& j) {
  open_out(c, name) << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative energy exchange: simulation, settlement and experiments"};
  app.require_subcommand(1);

  Common common;
  int mechanism = 2;
  std::size_t gen_n = 0;
  std::size_t gen_days = 0;

  auto* simulate = app.add_subcommand("simulate", "run one mechanism and export the trace");
  add_common(simulate, common, true);
  simulate->add_option("--mechanism", mechanism, "0 none, 1 individual, 2 exchange")->check(CLI::Range(0, 2));

  auto* settle = app.add_subcommand("settle", "settle one scenario under all three mechanisms");
  add_common(settle, common, true);

  auto* exp_loss = app.add_subcommand("exp-loss", "loss reduction across population size and efficiency spread");
  add_common(exp_loss, common, false);

  auto* exp_welfare = app.add_subcommand("exp-welfare", "payments, welfare and fairness of one cooperative");
  add_common(exp_welfare, common, true);

  auto* gen_data = app.add_subcommand("gen-data", "write synthetic household profiles as CSV");
  add_common(gen_data, common, false);
  gen_data->add_option("--n", gen_n, "number of households");
  gen_data->add_option("--days", gen_days, "days of data");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "coopex_cli: " << e.what() << '\n';
    return 2;
  }

  try {
    auto config = resolve_config(common);
    const bool json = common.format == "json";

    if (*gen_data) {
      if (gen_n > 0) config.n_prosumers = gen_n;
      if (gen_days > 0) config.days = gen_days;
      config.data_source = coopex::kSyntheticSource;
      config.validate();
      prepare_out_dir(common, config);
      const auto profiles = coopex::synthesize_profiles(config);
      auto out = open_out(common, "profiles.csv");
      coopex::write_profiles_csv(out, profiles, config.simulation_settings().start, config.dt_hours);
      return 0;
    }

    prepare_out_dir(common, config);
    LpDump dump(common);

    if (*simulate) {
      const auto scenario = coopex::build_scenario(config);
      const auto m = coopex::mechanism_from_id(mechanism);
      const auto trace = coopex::run_simulation(scenario, m, dump.observer());
      const std::string stem = "trace_m" + std::to_string(mechanism);
      if (json) {
        write_json(common, stem + ".json", coopex::trace_json(trace, config));
      } else {
        auto out = open_out(common, stem + ".csv");
        coopex::write_trace_csv(out, trace, config);
      }
    } else if (*settle) {
      const auto scenario = coopex::build_scenario(config);
      const auto settled = coopex::settle(scenario, {config.price, config.alpha_default}, dump.observer());
      if (json) {
        write_json(common, "settlement.json", coopex::settlement_json(settled.report, config));
      } else {
        auto out = open_out(common, "settlement.csv");
        coopex::write_settlement_csv(out, settled.report, config);
      }
    } else if (*exp_loss) {
      const auto report = coopex::run_experiment_loss_reduction(config);
      if (json) {
        write_json(common, "exp_loss.json", coopex::experiment_json(report));
      } else {
        auto rows = open_out(common, "exp_loss_rows.csv");
        coopex::write_experiment_rows_csv(rows, report);
        auto summary = open_out(common, "exp_loss_summary.csv");
        coopex::write_loss_summary_csv(summary, report);
      }
    } else if (*exp_welfare) {
      const auto report = coopex::run_experiment_welfare(config, dump.observer());
      if (json) {
        write_json(common, "exp_welfare.json", coopex::experiment_json(report));
      } else {
        auto rows = open_out(common, "exp_welfare_rows.csv");
        coopex::write_experiment_rows_csv(rows, report);
        auto pairs = open_out(common, "exp_welfare_improvements.csv");
        coopex::write_improvements_csv(pairs, report);
      }
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "coopex_cli: error: " << e.what() << '\n';
    return 1;
  }
}
