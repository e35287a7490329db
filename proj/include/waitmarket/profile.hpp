#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "waitmarket/commitment.hpp"
#include "waitmarket/error.hpp"
#include "waitmarket/model.hpp"

namespace waitmarket {

enum class PricingKind { revealed, pooled, constant };

// Price schedule of a cutoff profile. Pooled prices are tabulated on a
// uniform time grid over [0, sup s_bar) and interpolated linearly.
struct Pricing {
  PricingKind kind = PricingKind::revealed;
  double constant = 0.0;
  std::vector<double> pooled_times;
  std::vector<double> pooled_prices;

  static Pricing revealed() { return {}; }
  static Pricing fixed(double p) {
    Pricing out;
    out.kind = PricingKind::constant;
    out.constant = p;
    return out;
  }
  static Pricing pooled(const Environment& env, const CommitmentSolution& sol, std::size_t samples = 1024) {
    Pricing out;
    out.kind = PricingKind::pooled;
    const double sup = sol.sup_exit();
    if (!(sup > 0.0)) fail(ErrorKind::domain, "pooled pricing needs a positive exit time somewhere");
    out.pooled_times.resize(samples);
    out.pooled_prices.resize(samples);
    parallel_for(samples, [&](std::size_t j) {
      out.pooled_times[j] = sup * static_cast<double>(j) / static_cast<double>(samples);
      out.pooled_prices[j] = price_pooled(env, sol, out.pooled_times[j]);
    });
    return out;
  }

  double at(const Environment& env, const TypePoint& p, double t) const {
    switch (kind) {
      case PricingKind::constant: return constant;
      case PricingKind::pooled: return detail::lerp_on(pooled_times, pooled_prices, t);
      case PricingKind::revealed: break;
    }
    return posterior_mean(env, p, env.top_signal(), t, env.v_buyer());
  }

  bool time_invariant() const { return kind == PricingKind::constant; }
};

enum class AcceptanceKind { only_top, accept_set, threshold };

// Buyer acceptance by signal: only the top signal, a fixed set of signals, or
// every signal whose threshold is at least the posted price.
struct Acceptance {
  AcceptanceKind kind = AcceptanceKind::only_top;
  std::vector<bool> set;
  std::vector<double> thresholds;

  static Acceptance only_top() { return {}; }
  static Acceptance of_set(std::vector<bool> accepted) {
    Acceptance a;
    a.kind = AcceptanceKind::accept_set;
    a.set = std::move(accepted);
    return a;
  }
  static Acceptance all(std::size_t n_signals) { return of_set(std::vector<bool>(n_signals, true)); }
  static Acceptance by_threshold(std::vector<double> thresholds) {
    Acceptance a;
    a.kind = AcceptanceKind::threshold;
    a.thresholds = std::move(thresholds);
    return a;
  }

  bool accepts(std::size_t x, std::size_t top, double price) const {
    switch (kind) {
      case AcceptanceKind::only_top: return x == top;
      case AcceptanceKind::accept_set: return set.at(x);
      case AcceptanceKind::threshold: return price <= thresholds.at(x);
    }
    return false;
  }

  void check(std::size_t n_signals) const {
    if (kind == AcceptanceKind::accept_set && set.size() != n_signals)
      fail(ErrorKind::argument, "acceptance set needs one flag per signal");
    if (kind == AcceptanceKind::threshold && thresholds.size() != n_signals)
      fail(ErrorKind::argument, "acceptance thresholds need one entry per signal");
  }
};

struct CutoffStrategyProfile {
  std::vector<double> exit_times;
  Pricing pricing;
  Acceptance acceptance;

  static CutoffStrategyProfile optimal(const CommitmentSolution& sol) {
    return {sol.exit_times, Pricing::revealed(), Acceptance::only_top()};
  }

  void check(const Environment& env) const {
    if (exit_times.size() != env.num_nodes()) fail(ErrorKind::argument, "profile exit times need one entry per grid node");
    for (double s : exit_times)
      if (!(s >= 0.0) || !std::isfinite(s)) fail(ErrorKind::argument, "profile exit times must be finite and >= 0");
    acceptance.check(env.signals().size());
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["exit_times"] = exit_times;
    switch (pricing.kind) {
      case PricingKind::revealed: j["pricing"] = "revealed"; break;
      case PricingKind::pooled: j["pricing"] = "pooled"; break;
      case PricingKind::constant: j["pricing"] = {{"constant", pricing.constant}}; break;
    }
    switch (acceptance.kind) {
      case AcceptanceKind::only_top: j["acceptance"] = "only-top"; break;
      case AcceptanceKind::accept_set: j["acceptance"] = {{"set", acceptance.set}}; break;
      case AcceptanceKind::threshold: j["acceptance"] = {{"thresholds", acceptance.thresholds}}; break;
    }
    return j;
  }
};

// Trade probability, discounted trade probability and expected payment for a
// seller of type point p in state s who offers until `exit`.
struct TradeMoments {
  double probability = 0.0;
  double discounted = 0.0;
  double payment = 0.0;
};

inline TradeMoments trade_moments(const Environment& env, const CutoffStrategyProfile& profile, const TypePoint& p,
                                  std::size_t s, double exit, double delta, bool with_payment = true) {
  const double lambda = env.arrival_rate();
  const std::size_t nx = env.signals().size();
  const std::size_t top = env.top_signal();
  TradeMoments m;
  if (exit <= 0.0) return m;

  auto rate_at = [&](double price) {
    double q = 0.0;
    for (std::size_t x = 0; x < nx; ++x)
      if (profile.acceptance.accepts(x, top, price)) q += p.f[x][s];
    return lambda * q;
  };
  auto discounted_piece = [&](double q, double len) {
    if (q + delta == 0.0) return 0.0;
    return q / (q + delta) * -std::expm1(-(q + delta) * len);
  };

  const bool constant_rate =
      profile.acceptance.kind != AcceptanceKind::threshold || profile.pricing.time_invariant();
  if (constant_rate) {
    const double q = rate_at(profile.pricing.at(env, p, 0.0));
    m.probability = -std::expm1(-q * exit);
    m.discounted = discounted_piece(q, exit);
    if (with_payment && q > 0.0) {
      if (profile.pricing.time_invariant())
        m.payment = profile.pricing.constant * m.probability;
      else
        m.payment = gauss_legendre([&](double t) { return profile.pricing.at(env, p, t) * q * std::exp(-q * t); }, 0.0,
                                   exit, 64);
    }
    return m;
  }

  constexpr std::size_t kPanels = 256;
  const double h = exit / kPanels;
  double survive = 1.0;
  for (std::size_t k = 0; k < kPanels; ++k) {
    const double a = h * static_cast<double>(k);
    const double q = rate_at(profile.pricing.at(env, p, a + 0.5 * h));
    if (q > 0.0) {
      m.probability += survive * -std::expm1(-q * h);
      m.discounted += survive * std::exp(-delta * a) * discounted_piece(q, h);
      if (with_payment)
        m.payment += survive * gauss_legendre(
                                   [&](double t) { return profile.pricing.at(env, p, t) * q * std::exp(-q * (t - a)); },
                                   a, a + h, 1);
    }
    survive *= std::exp(-q * h);
  }
  return m;
}

inline double discounted_profile_value(const Environment& env, const CutoffStrategyProfile& profile, double delta) {
  if (!(delta >= 0.0)) fail(ErrorKind::argument, "discount rate must be >= 0");
  profile.check(env);
  double total = 0.0;
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    std::vector<double> terms(env.num_nodes());
    parallel_for(env.num_nodes(), [&](std::size_t i) {
      terms[i] = trade_moments(env, profile, env.node(i), s, profile.exit_times[i], delta, false).discounted *
                 env.types().mass_at(i, s);
    });
    total += env.prior()[s] * env.surplus(s) * pairwise_sum(terms);
  }
  return total;
}

struct ProfileValue {
  double surplus = 0.0;
  double profit = 0.0;
  double rent = 0.0;
};

inline ProfileValue analytic_profile_value(const Environment& env, const CutoffStrategyProfile& profile) {
  profile.check(env);
  ProfileValue out;
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    std::vector<double> prob(env.num_nodes()), pay(env.num_nodes());
    parallel_for(env.num_nodes(), [&](std::size_t i) {
      const auto m = trade_moments(env, profile, env.node(i), s, profile.exit_times[i], 0.0);
      prob[i] = m.probability * env.types().mass_at(i, s);
      pay[i] = m.payment * env.types().mass_at(i, s);
    });
    const double mu = env.prior()[s];
    const double trade = mu * pairwise_sum(prob);
    const double paid = mu * pairwise_sum(pay);
    out.surplus += env.surplus(s) * trade;
    out.profit += paid - env.v_seller()[s] * trade;
    out.rent += env.v_buyer()[s] * trade - paid;
  }
  return out;
}

}  // namespace waitmarket
