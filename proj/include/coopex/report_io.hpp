#pragma once

// CSV and JSON writers for traces, settlement reports and experiments.
// Every CSV opens with a "# config <json>" line holding the resolved
// configuration. Numbers are printed with 17 significant digits so output is
// byte-stable for a given configuration.

#include <cstdio>
#include <ostream>
#include <string>

#include "coopex/experiment.hpp"
#include "coopex/mechanism.hpp"
#include "coopex/scenario.hpp"
#include "coopex/settlement.hpp"
#include "json.hpp"

namespace coopex {

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_config_line(std::ostream& out, const ScenarioConfig& config) {
  out << "# config " << nlohmann::json(config).dump() << '\n';
}

inline void write_trace_csv(std::ostream& out, const SimulationTrace& trace, const ScenarioConfig& config) {
  write_config_line(out, config);
  out << "prosumer,t,d,pv,ex,pb,D,grid,spill,soc\n";
  for (const auto& p : trace.prosumers) {
    for (std::size_t t = 0; t < p.records.size(); ++t) {
      const auto& r = p.records[t];
      out << p.prosumer << ',' << t;
      for (double v : {r.demand, r.pv, r.exchange, r.battery, r.net_demand, r.grid_import, r.spill, r.soc}) {
        out << ',' << format_number(v);
      }
      out << '\n';
    }
  }
}

inline nlohmann::json trace_json(const SimulationTrace& trace, const ScenarioConfig& config) {
  nlohmann::json prosumers = nlohmann::json::array();
  for (const auto& p : trace.prosumers) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : p.records) {
      records.push_back({{"d", r.demand}, {"pv", r.pv}, {"ex", r.exchange}, {"pb", r.battery},
                         {"D", r.net_demand}, {"grid", r.grid_import}, {"spill", r.spill}, {"soc", r.soc}});
    }
    prosumers.push_back({{"prosumer", p.prosumer},
                         {"theta", p.restoration_offset},
                         {"soc_initial", p.initial.soc_kwh},
                         {"soc_final", p.final_state.soc_kwh},
                         {"records", std::move(records)}});
  }
  return {{"config", config}, {"mechanism", mechanism_id(trace.mechanism)}, {"prosumers", std::move(prosumers)}};
}

inline nlohmann::json fairness_json(const NashFairness& f) {
  return f.defined ? nlohmann::json(f.log_value) : nlohmann::json(nullptr);
}

inline std::string fairness_cell(const NashFairness& f) { return f.defined ? format_number(f.log_value) : ""; }

inline nlohmann::json settlement_json(const SettlementReport& report, const ScenarioConfig& config) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : report.agents) {
    agents.push_back({{"prosumer", a.prosumer},
                      {"loss", a.loss},
                      {"loss_individual", a.loss_individual},
                      {"marginal_loss", a.marginal_loss},
                      {"weight", a.weight},
                      {"reward", a.reward},
                      {"grid", a.grid},
                      {"exchange", a.exchange},
                      {"utility", a.utility}});
  }
  return {{"config", config},
          {"agents", std::move(agents)},
          {"system_loss", report.system_loss},
          {"system_loss_individual", report.system_loss_individual},
          {"loss_reduction", report.loss_reduction()},
          {"price", report.price},
          {"alpha", report.alpha.alpha},
          {"alpha_feasible", report.alpha.feasible},
          {"alpha_interval", {report.alpha.lower, report.alpha.upper}},
          {"social_welfare", report.social_welfare},
          {"log_fairness_2_0", fairness_json(report.fairness_exchange)},
          {"log_fairness_1_0", fairness_json(report.fairness_individual)}};
}

/// One row per agent, then "# key,value" footer lines for scenario figures.
inline void write_settlement_csv(std::ostream& out, const SettlementReport& report, const ScenarioConfig& config) {
  write_config_line(out, config);
  out << "prosumer,L,marginal_L,w,R,u0,u1,u2\n";
  for (const auto& a : report.agents) {
    out << a.prosumer;
    for (double v : {a.loss, a.marginal_loss, a.weight, a.reward, a.utility[0], a.utility[1], a.utility[2]}) {
      out << ',' << format_number(v);
    }
    out << '\n';
  }
  out << "# alpha," << format_number(report.alpha.alpha) << '\n';
  out << "# alpha_feasible," << (report.alpha.feasible ? "true" : "false") << '\n';
  for (std::size_t m = 0; m < 3; ++m) out << "# sw_" << m << ',' << format_number(report.social_welfare[m]) << '\n';
  out << "# log_f_2_0," << fairness_cell(report.fairness_exchange) << '\n';
  out << "# log_f_1_0," << fairness_cell(report.fairness_individual) << '\n';
}

inline void write_experiment_rows_csv(std::ostream& out, const ExperimentReport& report) {
  write_config_line(out, report.config);
  out << "n_prosumers,eta_std,seed,L1,L2,loss_reduction,alpha,feasible,sw0,sw1,sw2,log_f_2_0,log_f_1_0\n";
  for (const auto& r : report.rows) {
    out << r.n_prosumers << ',' << format_number(r.eta_std) << ',' << r.seed << ',' << format_number(r.loss_individual)
        << ',' << format_number(r.loss_exchange) << ',' << format_number(r.loss_reduction) << ',';
    if (r.alpha) out << format_number(r.alpha->alpha) << ',' << (r.alpha->feasible ? "true" : "false");
    else out << ',';
    for (std::size_t m = 0; m < 3; ++m) out << ',' << (r.social_welfare ? format_number((*r.social_welfare)[m]) : "");
    out << ',' << (r.fairness_exchange ? fairness_cell(*r.fairness_exchange) : "");
    out << ',' << (r.fairness_individual ? fairness_cell(*r.fairness_individual) : "") << '\n';
  }
}

inline void write_loss_summary_csv(std::ostream& out, const ExperimentReport& report) {
  write_config_line(out, report.config);
  out << "n_prosumers,eta_std,trials,mean_loss_reduction,std_loss_reduction,non_negative\n";
  for (const auto& s : report.summary) {
    out << s.n_prosumers << ',' << format_number(s.eta_std) << ',' << s.trials << ',' << format_number(s.mean) << ','
        << format_number(s.stddev) << ',' << s.non_negative << '\n';
  }
}

inline void write_improvements_csv(std::ostream& out, const ExperimentReport& report) {
  write_config_line(out, report.config);
  out << "prosumer,u1_minus_u0,u2_minus_u0\n";
  for (const auto& p : report.improvements) {
    out << p.prosumer << ',' << format_number(p.individual) << ',' << format_number(p.exchange) << '\n';
  }
}

inline nlohmann::json experiment_json(const ExperimentReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row = {{"n_prosumers", r.n_prosumers},
                          {"eta_std", r.eta_std},
                          {"seed", r.seed},
                          {"L1", r.loss_individual},
                          {"L2", r.loss_exchange},
                          {"loss_reduction", r.loss_reduction}};
    if (r.alpha) {
      row["alpha"] = r.alpha->alpha;
      row["feasible"] = r.alpha->feasible;
    }
    if (r.social_welfare) row["social_welfare"] = *r.social_welfare;
    if (r.fairness_exchange) row["log_f_2_0"] = fairness_json(*r.fairness_exchange);
    if (r.fairness_individual) row["log_f_1_0"] = fairness_json(*r.fairness_individual);
    rows.push_back(std::move(row));
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : report.summary) {
    summary.push_back({{"n_prosumers", s.n_prosumers},
                       {"eta_std", s.eta_std},
                       {"trials", s.trials},
                       {"mean_loss_reduction", s.mean},
                       {"std_loss_reduction", s.stddev},
                       {"non_negative", s.non_negative}});
  }
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : report.improvements) {
    pairs.push_back({{"prosumer", p.prosumer}, {"u1_minus_u0", p.individual}, {"u2_minus_u0", p.exchange}});
  }
  return {{"config", report.config}, {"rows", std::move(rows)}, {"summary", std::move(summary)},
          {"improvements", std::move(pairs)}};
}

}  // namespace coopex
