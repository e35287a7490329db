#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "waitmarket/commitment.hpp"
#include "waitmarket/error.hpp"
#include "waitmarket/model.hpp"
#include "waitmarket/numerics.hpp"
#include "waitmarket/profile.hpp"

namespace waitmarket {

// Counter-based SplitMix64 stream: draw k of stream `key` is mix(key + k * gamma).
class SplitMixStream {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  SplitMixStream(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed + kGamma) ^ mix(stream * kGamma + 1)) {}

  std::uint64_t next() { return mix(key_ + (++counter_) * kGamma); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  std::size_t discrete(const std::vector<double>& cumulative) {
    const double u = uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

struct RunRecord {
  std::size_t state = 0;
  double type = 0.0;
  double exit = 0.0;
  bool traded = false;
  double trade_time = 0.0;
  std::size_t signal = 0;
  double price = 0.0;
  std::size_t offers = 0;
  double surplus = 0.0;
  double profit = 0.0;
  double rent = 0.0;
};

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

struct SimulationStats {
  std::uint64_t seed = 0;
  std::size_t n_runs = 0;
  std::vector<RunRecord> runs;
  std::vector<std::size_t> state_runs;
  std::vector<Estimate> trade_frequency;  // per state
  std::vector<Estimate> expected_trade;   // per state, mean of trade_probability(exit(y), y, w)
  Estimate trade_rate;
  Estimate surplus;
  Estimate profit;
  Estimate rent;
  Estimate offers;
};

namespace detail {

inline Estimate estimate(const std::vector<double>& xs) {
  Estimate e;
  if (xs.empty()) return e;
  const double n = static_cast<double>(xs.size());
  e.mean = pairwise_sum(xs) / n;
  if (xs.size() < 2) return e;
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - e.mean) * (xs[i] - e.mean);
  e.se = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
  return e;
}

struct TypeSampler {
  std::vector<std::vector<double>> cumulative;  // per state, cell masses accumulated

  explicit TypeSampler(const Environment& env) : cumulative(env.num_states()) {
    for (std::size_t s = 0; s < env.num_states(); ++s) {
      double acc = 0.0;
      cumulative[s].reserve(env.num_nodes());
      for (double m : env.types().masses(s)) cumulative[s].push_back(acc += m);
    }
  }

  // Cell index and a type drawn linearly within the cell.
  std::pair<std::size_t, double> draw(const Environment& env, std::size_t s, SplitMixStream& rng) const {
    const auto& c = cumulative[s];
    const double u = rng.uniform() * c.back();
    std::size_t i = static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), u) - c.begin());
    i = std::min(i, c.size() - 1);
    const double below = i == 0 ? 0.0 : c[i - 1];
    const double frac = c[i] > below ? std::clamp((u - below) / (c[i] - below), 0.0, 1.0) : 0.5;
    const double a = env.grid().edge(i);
    const double b = env.grid().edge(i + 1);
    return {i, a + frac * (b - a)};
  }
};

}  // namespace detail

inline SimulationStats simulate(const Environment& env, const CutoffStrategyProfile& profile, std::size_t n_runs,
                                std::uint64_t seed) {
  if (n_runs < 1) fail(ErrorKind::argument, "simulate needs n_runs >= 1");
  profile.check(env);
  const std::size_t k = env.num_states();
  const std::size_t nx = env.signals().size();
  const std::size_t top = env.top_signal();
  const double lambda = env.arrival_rate();

  std::vector<double> prior_cumulative(k);
  double acc = 0.0;
  for (std::size_t s = 0; s < k; ++s) prior_cumulative[s] = acc += env.prior()[s];
  const detail::TypeSampler sampler(env);

  SimulationStats st;
  st.seed = seed;
  st.n_runs = n_runs;
  st.runs.resize(n_runs);
  std::vector<double> expected(n_runs);

  parallel_for(n_runs, [&](std::size_t r) {
    SplitMixStream rng(seed, r);
    RunRecord rec;
    rec.state = rng.discrete(prior_cumulative);
    const auto [cell, y] = sampler.draw(env, rec.state, rng);
    rec.type = y;
    rec.exit = profile.exit_times[cell];
    const TypePoint& p = env.node(cell);
    std::vector<double> signal_cumulative(nx);
    double c = 0.0;
    for (std::size_t x = 0; x < nx; ++x) signal_cumulative[x] = c += p.f[x][rec.state];
    expected[r] = -std::expm1(-lambda * p.f_top[rec.state] * rec.exit);

    double t = rng.exponential(lambda);
    while (t <= rec.exit) {
      ++rec.offers;
      const std::size_t x = rng.discrete(signal_cumulative);
      const double price = profile.pricing.at(env, p, t);
      if (profile.acceptance.accepts(x, top, price)) {
        rec.traded = true;
        rec.trade_time = t;
        rec.signal = x;
        rec.price = price;
        rec.profit = price - env.v_seller()[rec.state];
        rec.rent = env.v_buyer()[rec.state] - price;
        rec.surplus = rec.profit + rec.rent;
        break;
      }
      t += rng.exponential(lambda);
    }
    st.runs[r] = rec;
  });

  std::vector<double> surplus(n_runs), profit(n_runs), rent(n_runs), traded(n_runs), offers(n_runs);
  std::vector<std::vector<double>> by_state(k), expected_by_state(k);
  for (std::size_t r = 0; r < n_runs; ++r) {
    const auto& rec = st.runs[r];
    surplus[r] = rec.surplus;
    profit[r] = rec.profit;
    rent[r] = rec.rent;
    traded[r] = rec.traded ? 1.0 : 0.0;
    offers[r] = static_cast<double>(rec.offers);
    by_state[rec.state].push_back(traded[r]);
    expected_by_state[rec.state].push_back(expected[r]);
  }
  st.surplus = detail::estimate(surplus);
  st.profit = detail::estimate(profit);
  st.rent = detail::estimate(rent);
  st.trade_rate = detail::estimate(traded);
  st.offers = detail::estimate(offers);
  for (std::size_t s = 0; s < k; ++s) {
    st.state_runs.push_back(by_state[s].size());
    st.trade_frequency.push_back(detail::estimate(by_state[s]));
    st.expected_trade.push_back(detail::estimate(expected_by_state[s]));
  }
  return st;
}

struct PerturbationCase {
  CutoffStrategyProfile profile;
  double exit_scale = 1.0;
  double value = 0.0;
  bool violates_conditions = false;
};

struct PerturbationReport {
  double v_bar = 0.0;
  double optimal_value = 0.0;
  std::vector<PerturbationCase> cases;
  std::size_t dominance_violations = 0;
  std::size_t strictness_violations = 0;
  std::vector<nlohmann::json> offending;

  bool ok() const { return dominance_violations == 0 && strictness_violations == 0; }
};

// Exit scalings come from [0.25, 0.9] and [1.1, 4] so that every scaled profile
// moves the exit on a positive-measure set by a non-negligible amount.
inline PerturbationReport perturbation_suite(const Environment& env, const CommitmentSolution& com,
                                             std::size_t n_profiles, std::uint64_t seed) {
  const std::size_t nx = env.signals().size();
  const std::size_t top = env.top_signal();
  PerturbationReport rep;
  rep.v_bar = com.value;
  rep.optimal_value = analytic_profile_value(env, CutoffStrategyProfile::optimal(com)).surplus;

  double positive_mass = 0.0;
  for (std::size_t s = 0; s < env.num_states(); ++s)
    for (std::size_t i = 0; i < env.num_nodes(); ++i)
      if (com.exit_times[i] > 1e-9) positive_mass += env.prior()[s] * env.types().mass_at(i, s);

  rep.cases.resize(n_profiles);
  for (std::size_t j = 0; j < n_profiles; ++j) {
    SplitMixStream rng(seed, j);
    PerturbationCase& c = rep.cases[j];
    const unsigned mode = static_cast<unsigned>(rng.next() % 3);
    bool scaled = mode != 1;
    bool widened = mode != 0;
    if (scaled) {
      const double u = rng.uniform();
      c.exit_scale = u < 0.5 ? 0.25 + 1.3 * u : 1.1 + 5.8 * (u - 0.5);
    }
    std::vector<bool> set(nx, false);
    set[top] = true;
    if (widened) {
      bool any = false;
      for (std::size_t x = 0; x < nx; ++x)
        if (x != top && rng.uniform() < 0.5) any = set[x] = true;
      if (!any) set[rng.next() % top] = true;
    }
    c.profile.exit_times = com.exit_times;
    for (double& s : c.profile.exit_times) s *= c.exit_scale;
    c.profile.pricing = Pricing::revealed();
    c.profile.acceptance = widened ? Acceptance::of_set(set) : Acceptance::only_top();
    c.violates_conditions = widened || (scaled && positive_mass > 0.0);
  }

  parallel_for(n_profiles, [&](std::size_t j) {
    rep.cases[j].value = analytic_profile_value(env, rep.cases[j].profile).surplus;
  });

  for (const auto& c : rep.cases) {
    const bool dominated = c.value <= rep.v_bar + 1e-9;
    const bool strict = !c.violates_conditions || c.value < rep.v_bar - 1e-6;
    if (!dominated) ++rep.dominance_violations;
    if (!strict) ++rep.strictness_violations;
    if (!dominated || !strict) {
      auto j = c.profile.to_json();
      j["exit_scale"] = c.exit_scale;
      j["value"] = c.value;
      j["v_bar"] = rep.v_bar;
      rep.offending.push_back(std::move(j));
    }
  }
  return rep;
}

}  // namespace waitmarket
