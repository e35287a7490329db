#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "waitmarket/commitment.hpp"
#include "waitmarket/error.hpp"
#include "waitmarket/model.hpp"
#include "waitmarket/numerics.hpp"

namespace waitmarket {

enum class EquilibriumRegime { interior, ad_infinitum };

struct EquilibriumSolution {
  EquilibriumRegime regime = EquilibriumRegime::interior;
  double price = 0.0;
  std::vector<double> exit_times;
  double fixed_point_residual = 0.0;
  std::vector<double> deviation_thresholds;
};

struct EquilibriumOptions {
  double tol = 1e-9;
  CommitmentOptions inner{1e-12, 1e-14};
};

inline double prior_mean(const Environment& env, std::span<const double> values) {
  double m = 0.0;
  for (std::size_t s = 0; s < env.num_states(); ++s) m += env.prior()[s] * values[s];
  return m;
}

// Clauses other than E[v_B] < max v_S, which selects the regime instead.
inline void check_structural_condition(const Environment& env) {
  if (!env.conditionally_independent())
    fail(ErrorKind::precondition, "condition (1) fails: signals are not conditionally independent of the type");
  for (std::size_t s = 0; s + 1 < env.num_states(); ++s)
    if (!(env.v_seller()[s + 1] < env.v_seller()[s]))
      fail(ErrorKind::precondition, "condition (2) fails: v_seller is not strictly decreasing between states " +
                                        std::to_string(s) + " and " + std::to_string(s + 1));
}

inline void check_equilibrium_condition(const Environment& env) {
  check_structural_condition(env);
  const double mean_vb = prior_mean(env, env.v_buyer());
  const double max_vs = env.v_seller().front();
  if (!(mean_vb < max_vs))
    fail(ErrorKind::precondition, "condition (3) fails: E[v_B] = " + detail::fmt(mean_vb) + " >= max v_S = " +
                                      detail::fmt(max_vs));
}

inline double seller_posterior_value_at(const Environment& env, const TypePoint& p, double t) {
  return posterior_mean(env, p, env.top_signal(), t, env.v_seller());
}

inline double seller_posterior_value(const Environment& env, double t, double y) {
  check_equilibrium_condition(env);
  return seller_posterior_value_at(env, env.point(y), t);
}

inline double stop_time_given_price_at(const Environment& env, double p, const TypePoint& pt,
                                       const CommitmentOptions& opt = {1e-12, 1e-14}) {
  const double max_vs = *std::max_element(env.v_seller().begin(), env.v_seller().end());
  if (!(p < max_vs))
    fail(ErrorKind::unbounded, "price " + detail::fmt(p) + " >= max v_S: the seller never stops");
  auto fn = [&](double t) { return p - seller_posterior_value_at(env, pt, t); };
  return detail::crossing_with_cap_policy(fn, opt, nullptr);
}

inline double stop_time_given_price(const Environment& env, double p, double y,
                                    const CommitmentOptions& opt = {1e-12, 1e-14}) {
  check_structural_condition(env);
  return stop_time_given_price_at(env, p, env.point(y), opt);
}

// E[v_B | tau <= s(y)] with tau the first top-signal arrival.
inline double implied_price(const Environment& env, std::span<const double> s_profile) {
  if (s_profile.size() != env.num_nodes()) fail(ErrorKind::argument, "implied_price: profile length differs from grid");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    std::vector<double> terms(env.num_nodes());
    for (std::size_t i = 0; i < env.num_nodes(); ++i) {
      if (!(s_profile[i] >= 0.0)) fail(ErrorKind::argument, "implied_price: negative exit time");
      terms[i] = -std::expm1(-env.arrival_rate() * env.node(i).f_top[s] * s_profile[i]) * env.types().mass_at(i, s);
    }
    const double mass = env.prior()[s] * pairwise_sum(terms);
    num += env.v_buyer()[s] * mass;
    den += mass;
  }
  if (!(den > 0.0)) fail(ErrorKind::undefined_conditional, "implied_price: no type ever trades");
  return num / den;
}

namespace detail {

inline std::vector<double> stop_profile(const Environment& env, double p, const CommitmentOptions& opt) {
  std::vector<double> s(env.num_nodes());
  parallel_for(env.num_nodes(), [&](std::size_t i) { s[i] = stop_time_given_price_at(env, p, env.node(i), opt); });
  return s;
}

}  // namespace detail

// Signal-x buyer's value of trading at the equilibrium, given the profile s*.
inline double deviation_threshold_for(const Environment& env, std::span<const double> exit_times, std::size_t x) {
  if (x >= env.signals().size()) fail(ErrorKind::argument, "signal index out of range");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    std::vector<double> terms(env.num_nodes());
    for (std::size_t i = 0; i < env.num_nodes(); ++i) {
      const auto& p = env.node(i);
      terms[i] = p.f[x][s] / p.f_top[s] * -std::expm1(-env.arrival_rate() * p.f_top[s] * exit_times[i]) *
                 env.types().mass_at(i, s);
    }
    const double mass = env.prior()[s] * pairwise_sum(terms);
    num += env.v_buyer()[s] * mass;
    den += mass;
  }
  if (!(den > 0.0)) fail(ErrorKind::undefined_conditional, "deviation threshold: no type ever trades");
  return num / den;
}

inline double deviation_threshold(const Environment& env, const EquilibriumSolution& sol, std::size_t x) {
  return deviation_threshold_for(env, sol.exit_times, x);
}

inline EquilibriumSolution solve(const Environment& env, const EquilibriumOptions& opt = {}) {
  check_structural_condition(env);
  EquilibriumSolution sol;
  const double mean_vb = prior_mean(env, env.v_buyer());
  const double max_vs = env.v_seller().front();
  if (!(mean_vb < max_vs)) {
    sol.regime = EquilibriumRegime::ad_infinitum;
    sol.price = mean_vb;
    return sol;
  }
  const double floor = seller_posterior_value_at(env, env.node(env.num_nodes() - 1), 0.0);
  const double eps = 1e-9 * (max_vs - floor);
  auto map = [&](double p) { return implied_price(env, detail::stop_profile(env, p, opt.inner)); };
  sol.price = bisect_monotone_fixed_point(map, floor + eps, max_vs - eps, opt.tol);
  sol.exit_times = detail::stop_profile(env, sol.price, opt.inner);
  sol.fixed_point_residual = std::abs(implied_price(env, sol.exit_times) - sol.price);
  sol.deviation_thresholds.resize(env.signals().size());
  for (std::size_t x = 0; x < env.signals().size(); ++x)
    sol.deviation_thresholds[x] = deviation_threshold_for(env, sol.exit_times, x);
  return sol;
}

inline double binary_sstar_closed_form(const Environment& env, double p_star, double y) {
  if (env.num_states() != 2) fail(ErrorKind::precondition, "closed form needs binary states");
  const double vs_hi = env.v_seller()[1];
  const double vs_lo = env.v_seller()[0];
  if (!(p_star > vs_hi && p_star < vs_lo))
    fail(ErrorKind::domain, "closed form needs v_S(high) < p* < v_S(low), got p* = " + detail::fmt(p_star));
  const TypePoint p = env.point(y);
  const double f_hi = p.f_top[1];
  const double f_lo = p.f_top[0];
  const double log_odds = p.log_prior_density[1] + std::log(f_hi) - p.log_prior_density[0] - std::log(f_lo);
  const double t = (log_odds + std::log((p_star - vs_hi) / (vs_lo - p_star))) / (env.arrival_rate() * (f_hi - f_lo));
  return std::max(0.0, t);
}

// Exit time of binary states from the log-odds form.
inline double binary_sbar_closed_form(const Environment& env, double y) {
  if (env.num_states() != 2) fail(ErrorKind::precondition, "closed form needs binary states");
  const TypePoint p = env.point(y);
  const double f_hi = p.f_top[1];
  const double f_lo = p.f_top[0];
  const double log_odds = p.log_prior_density[1] + std::log(f_hi) - p.log_prior_density[0] - std::log(f_lo);
  const double t = (log_odds + std::log(env.surplus(1) / -env.surplus(0))) / (env.arrival_rate() * (f_hi - f_lo));
  return std::max(0.0, t);
}

inline double equilibrium_seller_utility(const Environment& env, const EquilibriumSolution& eq) {
  double total = 0.0;
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    std::vector<double> terms(env.num_nodes());
    for (std::size_t i = 0; i < env.num_nodes(); ++i)
      terms[i] = -std::expm1(-env.arrival_rate() * env.node(i).f_top[s] * eq.exit_times[i]) * env.types().mass_at(i, s);
    total += env.prior()[s] * (eq.price - env.v_seller()[s]) * pairwise_sum(terms);
  }
  return total;
}

inline double equilibrium_buyer_rent(const Environment& env, const EquilibriumSolution& eq) {
  double total = 0.0;
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    std::vector<double> terms(env.num_nodes());
    for (std::size_t i = 0; i < env.num_nodes(); ++i)
      terms[i] = -std::expm1(-env.arrival_rate() * env.node(i).f_top[s] * eq.exit_times[i]) * env.types().mass_at(i, s);
    total += env.prior()[s] * (env.v_buyer()[s] - eq.price) * pairwise_sum(terms);
  }
  return total;
}

struct ComparisonReport {
  std::vector<double> margin;   // s*(y) - s_bar(y) per node
  double min_positive_margin = 0.0;  // over nodes with s_bar > 1e-9
  bool ordering_holds = true;   // s* >= s_bar everywhere, strictly where s_bar > 1e-9
  double commitment_value = 0.0;
  double equilibrium_utility = 0.0;
  double value_gap = 0.0;
  double buyer_rent = 0.0;
};

inline ComparisonReport compare_vs_commitment(const Environment& env, const EquilibriumSolution& eq,
                                              const CommitmentSolution& com, double strict_margin = 1e-6) {
  if (env.num_states() != 2) fail(ErrorKind::precondition, "comparison needs binary states");
  if (eq.regime != EquilibriumRegime::interior) fail(ErrorKind::precondition, "comparison needs an interior equilibrium");
  ComparisonReport r;
  r.margin.resize(env.num_nodes());
  r.min_positive_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < env.num_nodes(); ++i) {
    r.margin[i] = eq.exit_times[i] - com.exit_times[i];
    if (com.exit_times[i] > 1e-9) {
      r.min_positive_margin = std::min(r.min_positive_margin, r.margin[i]);
      if (!(r.margin[i] > strict_margin)) r.ordering_holds = false;
    } else if (r.margin[i] < -1e-9) {
      r.ordering_holds = false;
    }
  }
  r.commitment_value = com.value;
  r.equilibrium_utility = equilibrium_seller_utility(env, eq);
  r.value_gap = r.commitment_value - r.equilibrium_utility;
  r.buyer_rent = equilibrium_buyer_rent(env, eq);
  return r;
}

}  // namespace waitmarket
