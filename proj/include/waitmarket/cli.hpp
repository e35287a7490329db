#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "waitmarket/commitment.hpp"
#include "waitmarket/config.hpp"
#include "waitmarket/csv.hpp"
#include "waitmarket/equilibrium.hpp"
#include "waitmarket/error.hpp"
#include "waitmarket/fixtures.hpp"
#include "waitmarket/profile.hpp"
#include "waitmarket/simulator.hpp"

namespace waitmarket::cli {

namespace fs = std::filesystem;

inline constexpr int kOk = 0;
inline constexpr int kNumericFailure = 1;
inline constexpr int kUsageError = 2;

inline const std::vector<std::string>& fixture_names() {
  static const std::vector<std::string> names{"figure1", "figure2", "appendix-d2", "appendix-d3", "env-a0"};
  return names;
}

struct Request {
  std::string command;
  std::string fixture;  // reproduce only
  std::optional<std::string> config;
  Overrides overrides;
};

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::argument:
    case ErrorKind::domain:
    case ErrorKind::precondition:
    case ErrorKind::invalid_environment:
    case ErrorKind::config:
    case ErrorKind::usage: return kUsageError;
    default: return kNumericFailure;
  }
}

inline json error_record(ErrorKind kind, const std::string& message) {
  return {{"error", to_string(kind)}, {"message", message}, {"exit_code", exit_code(kind)}};
}

// ---------------------------------------------------------------------------
// Tables

inline csv::Table exit_profile_table(const Environment& env, const CommitmentSolution& sol) {
  csv::Table t({"y", "s_bar"});
  for (std::size_t i = 0; i < env.num_nodes(); ++i) t.add({env.grid().nodes[i], sol.exit_times[i]});
  return t;
}

// p_bar at the middle grid node, p_hat over [0, sup s_bar).
inline csv::Table prices_table(const Environment& env, const CommitmentSolution& sol, std::size_t samples = 200) {
  csv::Table t({"t", "p_bar", "p_hat"});
  const double sup = sol.sup_exit();
  if (!(sup > 0.0)) return t;
  const TypePoint& mid = env.node(env.num_nodes() / 2);
  std::vector<double> pb(samples), ph(samples);
  parallel_for(samples, [&](std::size_t j) {
    const double time = sup * static_cast<double>(j) / static_cast<double>(samples);
    pb[j] = posterior_mean(env, mid, env.top_signal(), time, env.v_buyer());
    ph[j] = price_pooled(env, sol, time);
  });
  for (std::size_t j = 0; j < samples; ++j) t.add({sup * static_cast<double>(j) / static_cast<double>(samples), pb[j], ph[j]});
  return t;
}

inline csv::Table equilibrium_table(const Environment& env, const EquilibriumSolution& eq) {
  csv::Table t({"y", "s_star", "p_star", "residual"});
  for (std::size_t i = 0; i < env.num_nodes(); ++i) {
    const double s = eq.regime == EquilibriumRegime::interior ? eq.exit_times[i] : std::numeric_limits<double>::infinity();
    t.add({env.grid().nodes[i], s, eq.price, eq.fixed_point_residual});
  }
  return t;
}

inline csv::Table thresholds_table(const Environment& env, const EquilibriumSolution& eq) {
  csv::Table t({"x", "threshold"});
  for (std::size_t x = 0; x < eq.deviation_thresholds.size(); ++x)
    t.add({env.signals().values()[x], eq.deviation_thresholds[x]});
  return t;
}

inline csv::Table runs_table(const SimulationStats& st) {
  csv::Table t({"run", "state", "type", "exit", "traded", "trade_time", "signal", "price", "offers", "surplus", "profit",
                "rent"});
  for (std::size_t r = 0; r < st.runs.size(); ++r) {
    const auto& x = st.runs[r];
    t.add({static_cast<long long>(r), static_cast<long long>(x.state), x.type, x.exit, static_cast<long long>(x.traded),
           x.trade_time, static_cast<long long>(x.signal), x.price, static_cast<long long>(x.offers), x.surplus, x.profit,
           x.rent});
  }
  return t;
}

inline csv::Table summary_table(const SimulationStats& st) {
  csv::Table t({"metric", "value", "se"});
  t.add({std::string("n_runs"), static_cast<double>(st.n_runs), 0.0});
  t.add({std::string("seed"), static_cast<double>(st.seed), 0.0});
  t.add({std::string("trade_rate"), st.trade_rate.mean, st.trade_rate.se});
  t.add({std::string("surplus"), st.surplus.mean, st.surplus.se});
  t.add({std::string("profit"), st.profit.mean, st.profit.se});
  t.add({std::string("rent"), st.rent.mean, st.rent.se});
  t.add({std::string("offers"), st.offers.mean, st.offers.se});
  for (std::size_t s = 0; s < st.trade_frequency.size(); ++s) {
    t.add({"trade_frequency_state_" + std::to_string(s), st.trade_frequency[s].mean, st.trade_frequency[s].se});
    t.add({"expected_trade_state_" + std::to_string(s), st.expected_trade[s].mean, st.expected_trade[s].se});
  }
  return t;
}

inline void write_value(const fs::path& path, double v) { csv::write_atomic(path, csv::format_double(v) + "\n"); }

// ---------------------------------------------------------------------------
// Commands

inline CommitmentOptions commitment_options(const RunConfig& c) {
  CommitmentOptions o;
  o.tol_t = c.tol;
  return o;
}

inline CutoffStrategyProfile simulation_profile(const RunConfig& c, const CommitmentSolution& sol) {
  CutoffStrategyProfile p = CutoffStrategyProfile::optimal(sol);
  for (double& s : p.exit_times) s *= c.simulate.exit_scale;
  const json& pr = c.simulate.pricing;
  if (pr.is_number()) {
    p.pricing = Pricing::fixed(pr.get<double>());
  } else if (pr == "pooled") {
    p.pricing = Pricing::pooled(c.env, sol);
  } else if (pr != "revealed") {
    fail(ErrorKind::config, "simulate.pricing must be 'revealed', 'pooled' or a number");
  }
  const json& ac = c.simulate.acceptance;
  const std::size_t nx = c.env.signals().size();
  if (ac == "all") {
    p.acceptance = Acceptance::all(nx);
  } else if (ac.is_array()) {
    std::vector<bool> set(nx, false);
    for (const auto& x : ac) {
      if (!x.is_number_unsigned() || x.get<std::size_t>() >= nx)
        fail(ErrorKind::config, "simulate.acceptance lists an invalid signal index");
      set[x.get<std::size_t>()] = true;
    }
    p.acceptance = Acceptance::of_set(std::move(set));
  } else if (ac != "only-top") {
    fail(ErrorKind::config, "simulate.acceptance must be 'only-top', 'all' or a list of signal indices");
  }
  return p;
}

inline int cmd_validate(const RunConfig& c, std::ostream& out) {
  const auto report = validate(c.env);
  out << report.to_string();
  return report.ok() ? kOk : kUsageError;
}

inline int cmd_solve_commitment(const RunConfig& c, std::ostream& out) {
  const fs::path dir(c.out);
  const auto sol = exit_profile(c.env, commitment_options(c));
  csv::write(dir / "exit_profile.csv", exit_profile_table(c.env, sol));
  csv::write(dir / "prices.csv", prices_table(c.env, sol));
  write_value(dir / "value.txt", sol.value);
  out << "V_bar " << csv::format_double(sol.value) << "\n";
  return kOk;
}

inline int cmd_solve_equilibrium(const RunConfig& c, std::ostream& out) {
  const fs::path dir(c.out);
  EquilibriumOptions opt;
  opt.tol = c.tol;
  const auto eq = solve(c.env, opt);
  csv::write(dir / "equilibrium.csv", equilibrium_table(c.env, eq));
  csv::write(dir / "thresholds.csv", thresholds_table(c.env, eq));
  if (eq.regime == EquilibriumRegime::ad_infinitum)
    out << "regime ad-infinitum, price " << csv::format_double(eq.price) << "\n";
  else
    out << "p_star " << csv::format_double(eq.price) << " residual " << csv::format_double(eq.fixed_point_residual)
        << "\n";
  return kOk;
}

inline int cmd_simulate(const RunConfig& c, std::ostream& out) {
  const fs::path dir(c.out);
  const auto sol = exit_profile(c.env, commitment_options(c));
  const auto st = simulate(c.env, simulation_profile(c, sol), c.runs, c.seed);
  csv::write(dir / "runs.csv", runs_table(st));
  csv::write(dir / "summary.csv", summary_table(st));
  out << "surplus " << csv::format_double(st.surplus.mean) << " se " << csv::format_double(st.surplus.se) << "\n";
  return kOk;
}

inline int cmd_sweep(const RunConfig& c, std::ostream& out) {
  if (!c.sweep) fail(ErrorKind::usage, "sweep needs a 'sweep' block in the config");
  const auto& sw = *c.sweep;
  if (sw.steps == 0 || sw.from > sw.to || (sw.steps > 1 && sw.from == sw.to))
    fail(ErrorKind::usage, "sweep range is empty");
  const json::json_pointer ptr(sw.path);
  if (!c.environment_spec.contains(ptr)) fail(ErrorKind::usage, "sweep path " + sw.path + " not in environment");

  csv::Table t({"parameter", "v_bar", "p_star", "value_gap"});
  for (double v : sw.values()) {
    json spec = c.environment_spec;
    spec[ptr] = v;
    const Environment env = environment_from_json(spec, c.grid_nodes);
    const auto report = validate(env);
    if (!report.ok())
      fail(ErrorKind::invalid_environment, "sweep value " + csv::format_double(v) + " fails validation\n" +
                                               report.to_string());
    const auto sol = exit_profile(env, commitment_options(c));
    double p_star = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::quiet_NaN();
    try {
      EquilibriumOptions opt;
      opt.tol = c.tol;
      const auto eq = solve(env, opt);
      p_star = eq.price;
      if (eq.regime == EquilibriumRegime::interior) gap = sol.value - equilibrium_seller_utility(env, eq);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::precondition) throw;
    }
    t.add({v, sol.value, p_star, gap});
  }
  csv::write(fs::path(c.out) / "sweep.csv", t);
  out << "sweep rows " << t.rows() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// Reproduction fixtures

inline int reproduce_figure1(const fs::path& dir, std::size_t nodes, std::ostream& out) {
  const std::vector<double> priors{0.5, 0.2, 0.3};
  std::vector<CommitmentSolution> sols;
  for (double mu : priors) sols.push_back(exit_profile(fixtures::figure1(mu, nodes)));
  csv::Table t({"y", "s_bar_mu_0.5", "s_bar_mu_0.2", "s_bar_mu_0.3"});
  for (std::size_t i = 0; i < nodes; ++i)
    t.add({sols[0].type_grid.nodes[i], sols[0].exit_times[i], sols[1].exit_times[i], sols[2].exit_times[i]});
  csv::write(dir / "figure1.csv", t);
  for (std::size_t k = 0; k < priors.size(); ++k)
    out << "mu_high " << priors[k] << " s_bar " << to_string(classify_differences(sols[k].exit_times, 0.0)) << "\n";
  return kOk;
}

inline int reproduce_figure2(const fs::path& dir, std::size_t nodes, std::ostream& out) {
  const std::vector<double> bs{2.0, 0.5, 1.0};
  csv::Table prices({"b", "t", "p_hat"});
  csv::Table summary({"b", "inf_s_bar", "sup_s_bar", "initial", "later", "later_spread", "hazard_ratio", "pairs_checked",
                      "pairs_consistent"});
  for (double b : bs) {
    const auto env = fixtures::env_k(b, nodes);
    const auto sol = exit_profile(env);
    const std::size_t m = 200;
    std::vector<double> ph(m);
    parallel_for(m, [&](std::size_t j) {
      ph[j] = price_pooled(env, sol, sol.sup_exit() * static_cast<double>(j) / static_cast<double>(m));
    });
    for (std::size_t j = 0; j < m; ++j) prices.add({b, sol.sup_exit() * static_cast<double>(j) / static_cast<double>(m), ph[j]});
    const auto r = classify_price_dynamics(env, sol);
    summary.add({b, r.inf_exit, r.sup_exit, to_string(r.initial), to_string(r.later), r.later_spread,
                 to_string(r.hazard_ratio_trend), static_cast<long long>(r.pairs_checked),
                 static_cast<long long>(r.pairs_consistent)});
    out << "b " << b << " initial " << to_string(r.initial) << " later " << to_string(r.later) << "\n";
  }
  csv::write(dir / "figure2.csv", prices);
  csv::write(dir / "figure2_summary.csv", summary);
  return kOk;
}

inline int reproduce_d2(const fs::path& dir, std::size_t nodes, std::ostream& out) {
  const auto env = fixtures::appendix_d2(nodes);
  const auto zero = best_signal_exit(env, 1);
  const auto top = probability_matched_exit(env, env.top_signal(), zero.trade_probability);
  csv::Table t({"metric", "value"});
  t.add({std::string("signal0_exit"), zero.exit});
  t.add({std::string("signal0_conditional_surplus"), zero.conditional_surplus});
  t.add({std::string("trade_probability"), zero.trade_probability});
  t.add({std::string("top_exit"), top.exit});
  t.add({std::string("top_conditional_surplus"), top.conditional_surplus});
  csv::write(dir / "appendix_d2.csv", t);
  out << t.str();
  return kOk;
}

inline int reproduce_d3(const fs::path& dir, std::size_t nodes, std::ostream& out) {
  const auto env = fixtures::env_c(nodes);
  const auto sol = exit_profile(env);
  csv::write(dir / "exit_profile.csv", exit_profile_table(env, sol));
  csv::Table t({"metric", "value"});
  t.add({std::string("t"), 13.0});
  t.add({std::string("posterior_x0"), buyer_posterior_pooled(env, sol, 0, 13.0)});
  t.add({std::string("p_hat"), price_pooled(env, sol, 13.0)});
  t.add({std::string("marginal_type"), marginal_type(env, 13.0)});
  csv::write(dir / "appendix_d3.csv", t);
  out << t.str();
  return kOk;
}

inline int reproduce_env_a0(const fs::path& dir, std::size_t nodes, std::ostream& out) {
  const auto env = fixtures::env_a0(0.8, nodes);
  const auto sol = exit_profile(env);
  const auto eq = solve(env);
  csv::write(dir / "exit_profile.csv", exit_profile_table(env, sol));
  csv::write(dir / "prices.csv", prices_table(env, sol));
  csv::write(dir / "equilibrium.csv", equilibrium_table(env, eq));
  csv::write(dir / "thresholds.csv", thresholds_table(env, eq));
  csv::Table t({"metric", "value"});
  t.add({std::string("s_bar"), sol.exit_times.front()});
  t.add({std::string("v_bar"), sol.value});
  t.add({std::string("p_star"), eq.price});
  t.add({std::string("s_star"), eq.exit_times.front()});
  t.add({std::string("equilibrium_utility"), equilibrium_seller_utility(env, eq)});
  csv::write(dir / "env_a0.csv", t);
  out << t.str();
  return kOk;
}

inline int cmd_reproduce(const Request& req, std::ostream& out) {
  const fs::path dir(req.overrides.out.value_or("."));
  const std::size_t nodes = req.overrides.grid_nodes.value_or(kDefaultGridNodes);
  if (nodes < 2) fail(ErrorKind::usage, "--grid-nodes must be >= 2");
  if (req.fixture == "figure1") return reproduce_figure1(dir, nodes, out);
  if (req.fixture == "figure2") return reproduce_figure2(dir, nodes, out);
  if (req.fixture == "appendix-d2") return reproduce_d2(dir, nodes, out);
  if (req.fixture == "appendix-d3") return reproduce_d3(dir, nodes, out);
  if (req.fixture == "env-a0") return reproduce_env_a0(dir, nodes, out);
  fail(ErrorKind::usage, "unknown fixture '" + req.fixture + "'");
}

inline int dispatch(const Request& req, std::ostream& out) {
  if (req.command == "reproduce") return cmd_reproduce(req, out);
  if (!req.config) fail(ErrorKind::usage, req.command + " needs --config PATH");
  const bool validating = req.command == "validate";
  const RunConfig c = load_config(*req.config, req.overrides, !validating);
  if (validating) return cmd_validate(c, out);
  if (req.command == "solve-commitment") return cmd_solve_commitment(c, out);
  if (req.command == "solve-equilibrium") return cmd_solve_equilibrium(c, out);
  if (req.command == "simulate") return cmd_simulate(c, out);
  if (req.command == "sweep") return cmd_sweep(c, out);
  fail(ErrorKind::usage, "unknown command '" + req.command + "'");
}

// Runs one command; failures print a JSON error record on `err`.
inline int run(const Request& req, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    return dispatch(req, out);
  } catch (const Error& e) {
    err << error_record(e.kind(), e.what()).dump() << "\n";
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    err << error_record(ErrorKind::config, e.what()).dump() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << error_record(ErrorKind::numeric, e.what()).dump() << "\n";
    return kNumericFailure;
  }
}

}  // namespace waitmarket::cli
