#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "waitmarket/error.hpp"
#include "waitmarket/model.hpp"
#include "waitmarket/numerics.hpp"

namespace waitmarket {

struct CommitmentOptions {
  double tol_t = 1e-9;
  double tol_f = 1e-12;
  double initial_cap = 64.0;
  double max_cap = 1048576.0;
};

enum class ThresholdPosition { below_grid, interior, above_grid };

struct ThresholdType {
  ThresholdPosition position = ThresholdPosition::below_grid;
  double y = 0.0;  // y0 when interior, otherwise the grid boundary
};

struct CommitmentSolution {
  TypeGrid type_grid;
  std::vector<double> exit_times;
  ThresholdType threshold;
  double value = 0.0;
  double t_cap = 0.0;

  std::vector<double> edge_exit_times;  // at the two ends of the type interval, when finite

  // The infimum also looks at the interval ends, where a singular density
  // can pull the exit time below every node. The supremum stays on the nodes:
  // past it the survivors are narrower than one grid cell.
  double inf_exit() const {
    double m = *std::min_element(exit_times.begin(), exit_times.end());
    for (double e : edge_exit_times) m = std::min(m, e);
    return m;
  }
  double sup_exit() const { return *std::max_element(exit_times.begin(), exit_times.end()); }
};

// ---------------------------------------------------------------------------
// Posterior surplus and exit times

inline double posterior_surplus(const Environment& env, double t, double y) {
  const TypePoint p = env.point(y);
  double acc = 0.0;
  for (std::size_t s = 0; s < env.num_states(); ++s)
    acc += env.surplus(s) * std::exp(p.log_prior_density[s]) * p.f_top[s] *
           std::exp(-env.arrival_rate() * p.f_top[s] * t);
  return acc;
}

struct SurplusView {
  const Environment* env;
  double operator[](std::size_t s) const { return env->v_buyer()[s] - env->v_seller()[s]; }
};

// E[v | tau = t, y]; same sign as posterior_surplus but scale-free.
inline double conditional_surplus(const Environment& env, const TypePoint& p, double t) {
  return posterior_mean(env, p, env.top_signal(), t, SurplusView{&env});
}

namespace detail {

template <class Fn>
double crossing_with_cap_policy(Fn&& fn, const CommitmentOptions& opt, double* cap_used) {
  double cap = opt.initial_cap;
  for (;;) {
    try {
      const double t = first_crossing_time(fn, cap, opt.tol_t, opt.tol_f);
      if (cap_used) *cap_used = std::max(*cap_used, cap);
      return t;
    } catch (const CapExceeded&) {
      if (cap * 2.0 > opt.max_cap)
        throw CapExceeded(cap, "exit time exceeds the hard cap " + detail::fmt(opt.max_cap));
      cap *= 2.0;
    }
  }
}

}  // namespace detail

inline double exit_time_at(const Environment& env, const TypePoint& p, const CommitmentOptions& opt = {},
                           double* cap_used = nullptr) {
  auto fn = [&](double t) { return conditional_surplus(env, p, t); };
  return detail::crossing_with_cap_policy(fn, opt, cap_used);
}

inline double exit_time(const Environment& env, double y, const CommitmentOptions& opt = {}) {
  return exit_time_at(env, env.point(y), opt);
}

inline double trade_probability(const Environment& env, double s, double y, std::size_t state) {
  if (!(s >= 0.0)) fail(ErrorKind::argument, "trade_probability: exit time must be >= 0");
  return -std::expm1(-env.arrival_rate() * f_bar(env, y, state) * s);
}

inline double commitment_value_of(const Environment& env, std::span<const double> exit_times) {
  if (exit_times.size() != env.num_nodes()) fail(ErrorKind::argument, "exit profile length differs from grid");
  double total = 0.0;
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    std::vector<double> terms(env.num_nodes());
    for (std::size_t i = 0; i < env.num_nodes(); ++i) {
      const double q = -std::expm1(-env.arrival_rate() * env.node(i).f_top[s] * exit_times[i]);
      terms[i] = q * env.types().mass_at(i, s);
    }
    total += env.prior()[s] * env.surplus(s) * pairwise_sum(terms);
  }
  return total;
}

inline double commitment_value(const Environment& env, const CommitmentSolution& sol) {
  return commitment_value_of(env, sol.exit_times);
}

inline CommitmentSolution exit_profile(const Environment& env, const CommitmentOptions& opt = {}) {
  const std::size_t n = env.num_nodes();
  CommitmentSolution sol;
  sol.type_grid = env.grid();
  sol.exit_times.assign(n, 0.0);
  std::vector<double> caps(n, 0.0);
  parallel_for(n, [&](std::size_t i) { sol.exit_times[i] = exit_time_at(env, env.node(i), opt, &caps[i]); });
  sol.t_cap = std::max(opt.initial_cap, *std::max_element(caps.begin(), caps.end()));
  const double inset = 1e-9 * (env.grid().hi - env.grid().lo);
  for (double y : {env.grid().lo + inset, env.grid().hi - inset}) {
    try {
      const double e = exit_time_at(env, env.point(y), opt);
      if (std::isfinite(e)) sol.edge_exit_times.push_back(e);
    } catch (const Error&) {
    }
  }

  std::vector<double> h0(n);
  for (std::size_t i = 0; i < n; ++i) h0[i] = conditional_surplus(env, env.node(i), 0.0);
  const bool all_pos = std::all_of(h0.begin(), h0.end(), [](double h) { return h > 0.0; });
  const bool none_pos = std::none_of(h0.begin(), h0.end(), [](double h) { return h > 0.0; });
  if (all_pos) {
    sol.threshold = {ThresholdPosition::below_grid, env.grid().lo};
  } else if (none_pos) {
    sol.threshold = {ThresholdPosition::above_grid, env.grid().hi};
  } else {
    std::size_t j = n - 1;
    while (j > 0 && h0[j - 1] > 0.0) --j;
    const double y0 = env.grid().nodes[j - 1] +
                      (env.grid().nodes[j] - env.grid().nodes[j - 1]) * (0.0 - h0[j - 1]) / (h0[j] - h0[j - 1]);
    sol.threshold = {ThresholdPosition::interior, y0};
  }
  sol.value = commitment_value(env, sol);
  return sol;
}

// ---------------------------------------------------------------------------
// Prices and buyer posteriors

inline double price_revealed(const Environment& env, double t, double y) {
  return posterior_mean(env, env.point(y), env.top_signal(), t, env.v_buyer());
}

inline double buyer_posterior_revealed(const Environment& env, std::size_t x, double t, double y) {
  if (x >= env.signals().size()) fail(ErrorKind::argument, "signal index out of range");
  return posterior_mean(env, env.point(y), x, t, env.v_buyer());
}

struct TypeInterval {
  double a = 0.0;
  double b = 0.0;
};

// Types still offering at time t: {y : s_bar(y) >= t} = {y : E[v | tau = t, y] >= 0}.
// Boundaries are located by bisection in y between cell edges.
inline std::vector<TypeInterval> surviving_types(const Environment& env, double t) {
  const auto& g = env.grid();
  const std::size_t n = g.size();
  const double inset = 1e-9 * (g.hi - g.lo);
  auto at = [&](std::size_t e) { return std::clamp(g.edge(e), g.lo + inset, g.hi - inset); };
  auto alive = [&](double y) { return conditional_surplus(env, env.point(y), t) >= 0.0; };
  auto boundary = [&](double a, double b, bool a_alive) {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      if (alive(mid) == a_alive)
        a = mid;
      else
        b = mid;
    }
    return 0.5 * (a + b);
  };

  std::vector<TypeInterval> out;
  bool prev = alive(at(0));
  double start = g.lo;
  for (std::size_t e = 1; e <= n; ++e) {
    const bool cur = alive(at(e));
    if (cur != prev) {
      const double y = boundary(at(e - 1), at(e), prev);
      if (prev) out.push_back({start, y});
      start = y;
      prev = cur;
    }
  }
  if (prev) out.push_back({start, g.hi});
  return out;
}

// Sum over states of values[s] mu(s) * integral over `set` of g(y|s) f(x|y,s) exp(-lambda f_top(y,s) t) dy,
// returned as numerator (values) and denominator (values = 1).
inline std::pair<double, double> pooled_moments(const Environment& env, const std::vector<TypeInterval>& set,
                                                std::size_t x, double t, std::span<const double> values) {
  const std::size_t k = env.num_states();
  const double lambda = env.arrival_rate();
  double shift = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < env.num_nodes(); ++i)
    for (std::size_t s = 0; s < k; ++s) shift = std::min(shift, env.node(i).f_top[s]);
  shift *= lambda * t;

  double num = 0.0;
  double den = 0.0;
  const auto& types = env.types();
  const double h = (env.grid().hi - env.grid().lo) / static_cast<double>(env.num_nodes());
  for (std::size_t s = 0; s < k; ++s) {
    double mass = 0.0;
    if (env.conditionally_independent()) {
      const double f = env.signals().prob(x, 0.0, s, env.states()[s]);
      const double ft = env.signals().prob(env.top_signal(), 0.0, s, env.states()[s]);
      for (const auto& iv : set) mass += types.cdf(iv.b, s) - types.cdf(iv.a, s);
      mass *= f * std::exp(-lambda * ft * t + shift);
    } else {
      for (const auto& iv : set) {
        const auto panels = static_cast<std::size_t>(std::max(1.0, std::ceil((iv.b - iv.a) / h)));
        mass += gauss_legendre(
            [&](double y) {
              const double ft = env.signals().prob(env.top_signal(), y, s, env.states()[s]);
              return types.pdf(y, s) * env.signals().prob(x, y, s, env.states()[s]) * std::exp(-lambda * ft * t + shift);
            },
            iv.a, iv.b, panels);
      }
    }
    num += values[s] * env.prior()[s] * mass;
    den += env.prior()[s] * mass;
  }
  return {num, den};
}

namespace detail {

inline void check_pooled_time(const CommitmentSolution& sol, double t) {
  if (!(t >= 0.0) || !(t < sol.sup_exit()))
    fail(ErrorKind::domain, "pooled price defined on [0, " + fmt(sol.sup_exit()) + "), got t = " + fmt(t));
}

}  // namespace detail

inline double buyer_posterior_pooled(const Environment& env, const CommitmentSolution& sol, std::size_t x, double t) {
  if (x >= env.signals().size()) fail(ErrorKind::argument, "signal index out of range");
  detail::check_pooled_time(sol, t);
  const auto set = surviving_types(env, t);
  if (set.empty()) fail(ErrorKind::undefined_conditional, "no surviving types at t = " + detail::fmt(t));
  const auto [num, den] = pooled_moments(env, set, x, t, env.v_buyer());
  if (!(den > 0.0)) fail(ErrorKind::undefined_conditional, "surviving types carry no mass at t = " + detail::fmt(t));
  return num / den;
}

inline double price_pooled(const Environment& env, const CommitmentSolution& sol, double t) {
  return buyer_posterior_pooled(env, sol, env.top_signal(), t);
}

// First boundary of the surviving set inside (lo, hi): the lowest surviving
// type when high types stay longer, the highest one when low types do.
inline double marginal_type(const Environment& env, double t) {
  const auto set = surviving_types(env, t);
  if (set.empty()) fail(ErrorKind::domain, "no surviving types at t = " + detail::fmt(t));
  const auto& g = env.grid();
  if (set.front().a > g.lo) return set.front().a;
  if (set.front().b < g.hi) return set.front().b;
  return g.lo;
}

inline bool nondecreasing(std::span<const double> xs) {
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] < xs[i - 1]) return false;
  return true;
}

// inf{y : s_bar(y) >= t}, piecewise linear between grid nodes.
inline double sbar_inverse(const CommitmentSolution& sol, double t) {
  const auto& s = sol.exit_times;
  const auto& y = sol.type_grid.nodes;
  if (!nondecreasing(s)) fail(ErrorKind::precondition, "sbar_inverse needs a nondecreasing exit profile");
  const double lo_t = s.front();
  const double hi_t = s.back();
  if (!(t >= lo_t && t <= hi_t))
    fail(ErrorKind::domain, "sbar_inverse: t = " + detail::fmt(t) + " outside [" + detail::fmt(lo_t) + ", " +
                                detail::fmt(hi_t) + "]");
  if (t >= hi_t) return sol.type_grid.hi;
  if (t <= lo_t) return lo_t == 0.0 && sol.threshold.position == ThresholdPosition::interior ? sol.threshold.y
                                                                                             : sol.type_grid.lo;
  const auto it = std::lower_bound(s.begin(), s.end(), t);
  const std::size_t j = static_cast<std::size_t>(it - s.begin());
  if (s[j] == s[j - 1]) return y[j];
  return y[j - 1] + (y[j] - y[j - 1]) * (t - s[j - 1]) / (s[j] - s[j - 1]);
}

// ---------------------------------------------------------------------------
// Price dynamics

enum class Trend { decreasing, increasing, constant, mixed, empty };

inline std::string to_string(Trend t) {
  switch (t) {
    case Trend::decreasing: return "decreasing";
    case Trend::increasing: return "increasing";
    case Trend::constant: return "constant";
    case Trend::mixed: return "mixed";
    case Trend::empty: return "empty";
  }
  return "unknown";
}

inline Trend classify_differences(std::span<const double> xs, double tol) {
  if (xs.size() < 2) return Trend::empty;
  bool up = false, down = false, flat = false;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const double d = xs[i] - xs[i - 1];
    if (d > tol)
      up = true;
    else if (d < -tol)
      down = true;
    else
      flat = true;
  }
  if (flat && !up && !down) return Trend::constant;
  if (up && !down && !flat) return Trend::increasing;
  if (down && !up && !flat) return Trend::decreasing;
  return Trend::mixed;
}

struct PriceDynamicsOptions {
  std::size_t samples = 200;
  std::size_t pairs = 1000;
  std::uint64_t seed = 20240611;
  double tie_tol = 1e-9;
};

struct PriceDynamicsReport {
  double inf_exit = 0.0;
  double sup_exit = 0.0;
  Trend initial = Trend::empty;      // on [0, inf s_bar]
  Trend later = Trend::empty;        // on (inf s_bar, sup s_bar)
  double later_spread = 0.0;         // max - min of the pooled price on (inf, sup)
  Trend hazard_ratio_trend = Trend::empty;  // rho_G over grid nodes
  std::size_t pairs_checked = 0;
  std::size_t pairs_consistent = 0;
  bool equivalence_holds() const { return pairs_checked > 0 && pairs_checked == pairs_consistent; }
};

inline PriceDynamicsReport classify_price_dynamics(const Environment& env, const CommitmentSolution& sol,
                                                   const PriceDynamicsOptions& opt = {}) {
  if (env.num_states() != 2) fail(ErrorKind::precondition, "price dynamics classification needs binary states");
  if (!env.conditionally_independent())
    fail(ErrorKind::precondition, "price dynamics classification needs conditionally independent signals");
  if (!nondecreasing(sol.exit_times)) fail(ErrorKind::precondition, "exit profile is not nondecreasing");

  PriceDynamicsReport r;
  r.inf_exit = sol.inf_exit();
  r.sup_exit = sol.sup_exit();
  const std::size_t m = opt.samples;

  if (r.inf_exit > 0.0) {
    std::vector<double> p(m + 1);
    for (std::size_t j = 0; j <= m; ++j) p[j] = price_pooled(env, sol, r.inf_exit * static_cast<double>(j) / m);
    r.initial = classify_differences(p, opt.tie_tol);
  }
  if (r.sup_exit > r.inf_exit) {
    std::vector<double> p(m - 1);
    for (std::size_t j = 1; j < m; ++j)
      p[j - 1] = price_pooled(env, sol, r.inf_exit + (r.sup_exit - r.inf_exit) * static_cast<double>(j) / m);
    r.later = classify_differences(p, opt.tie_tol);
    const auto [mn, mx] = std::minmax_element(p.begin(), p.end());
    r.later_spread = *mx - *mn;

    std::vector<double> rho;
    for (std::size_t i = 0; i < env.num_nodes(); ++i) {
      const double y = env.grid().nodes[i];
      if (env.types().survival(y, 0) > 0.0 && env.types().survival(y, 1) > 0.0) rho.push_back(hazard_ratio(env, y));
    }
    r.hazard_ratio_trend = classify_differences(rho, opt.tie_tol);

    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(r.inf_exit, r.sup_exit);
    auto sign = [&](double d) { return d > opt.tie_tol ? 1 : (d < -opt.tie_tol ? -1 : 0); };
    for (std::size_t k = 0; k < opt.pairs; ++k) {
      const double t1 = u(rng);
      const double t2 = u(rng);
      if (!(t1 > r.inf_exit && t2 > r.inf_exit && t1 < r.sup_exit && t2 < r.sup_exit)) continue;
      const double dp = price_pooled(env, sol, t1) - price_pooled(env, sol, t2);
      const double dr = hazard_ratio(env, marginal_type(env, t2)) - hazard_ratio(env, marginal_type(env, t1));
      ++r.pairs_checked;
      if (sign(dp) == sign(dr)) ++r.pairs_consistent;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Trading with a single signal until a common exit time

struct SignalTrading {
  double exit = 0.0;
  double trade_probability = 0.0;
  double conditional_surplus = 0.0;  // E[v | trade]
};

inline SignalTrading signal_trading(const Environment& env, std::size_t x, double exit) {
  if (x >= env.signals().size()) fail(ErrorKind::argument, "signal index out of range");
  if (!(exit >= 0.0)) fail(ErrorKind::argument, "exit time must be >= 0");
  SignalTrading r;
  r.exit = exit;
  double num = 0.0;
  for (std::size_t s = 0; s < env.num_states(); ++s) {
    std::vector<double> terms(env.num_nodes());
    for (std::size_t i = 0; i < env.num_nodes(); ++i)
      terms[i] = -std::expm1(-env.arrival_rate() * env.node(i).f[x][s] * exit) * env.types().mass_at(i, s);
    const double q = env.prior()[s] * pairwise_sum(terms);
    r.trade_probability += q;
    num += env.surplus(s) * q;
  }
  r.conditional_surplus = r.trade_probability > 0.0 ? num / r.trade_probability : 0.0;
  return r;
}

// Exit time maximizing expected surplus when only signal-x buyers trade.
inline SignalTrading best_signal_exit(const Environment& env, std::size_t x, const CommitmentOptions& opt = {}) {
  if (x >= env.signals().size()) fail(ErrorKind::argument, "signal index out of range");
  auto marginal = [&](double t) {
    double d = 0.0;
    for (std::size_t s = 0; s < env.num_states(); ++s)
      for (std::size_t i = 0; i < env.num_nodes(); ++i) {
        const double rate = env.arrival_rate() * env.node(i).f[x][s];
        d += env.prior()[s] * env.surplus(s) * rate * std::exp(-rate * t) * env.types().mass_at(i, s);
      }
    return d;
  };
  return signal_trading(env, x, detail::crossing_with_cap_policy(marginal, opt, nullptr));
}

// Exit time at which signal-x trading reaches the given ex-ante trade probability.
inline SignalTrading probability_matched_exit(const Environment& env, std::size_t x, double target) {
  const double sup = signal_trading(env, x, std::numeric_limits<double>::max()).trade_probability;
  if (!(target >= 0.0 && target < sup))
    fail(ErrorKind::domain, "target trade probability " + detail::fmt(target) + " outside [0, " + detail::fmt(sup) + ")");
  double hi = 1.0;
  while (signal_trading(env, x, hi).trade_probability < target) {
    hi *= 2.0;
    if (hi > 1048576.0) fail(ErrorKind::cap_exceeded, "probability-matched exit exceeds the time cap");
  }
  double lo = 0.0;
  while (hi - lo > 1e-12 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (signal_trading(env, x, mid).trade_probability < target ? lo : hi) = mid;
  }
  return signal_trading(env, x, 0.5 * (lo + hi));
}

// ---------------------------------------------------------------------------
// Informativeness

struct LehmannWitness {
  double y = 0.0;
  std::size_t state_low = 0;
  std::size_t state_high = 0;
  double quantile_low = 0.0;
  double quantile_high = 0.0;
};

struct LehmannResult {
  bool holds = true;
  std::optional<LehmannWitness> witness;
};

// Whether T2 is Lehmann-more informative than T1: G2^{-1}(G1(y|w)|w) nondecreasing in w.
inline LehmannResult lehmann_more_informative(const TypeModel& t2, const TypeModel& t1, std::span<const double> ys,
                                              double tol = 1e-9) {
  if (t1.num_states() != t2.num_states()) fail(ErrorKind::argument, "type models have different state counts");
  for (const TypeModel* tm : {&t1, &t2})
    for (std::size_t s = 0; s < tm->num_states(); ++s)
      for (std::size_t i = 1; i < tm->grid().size(); ++i)
        if (!(tm->density_at(i, s) > 0.0) || tm->cdf_at(i, s) < tm->cdf_at(i - 1, s))
          fail(ErrorKind::precondition, "type cdf is not strictly increasing on its grid");
  LehmannResult r;
  for (double y : ys) {
    std::vector<double> q(t1.num_states());
    for (std::size_t s = 0; s < q.size(); ++s) {
      const double p = t1.cdf(y, s);
      q[s] = quantile_from_cdf([&](double z) { return t2.cdf(z, s); }, t2.lo(), t2.hi(), p, 1e-14);
    }
    for (std::size_t s = 0; s + 1 < q.size(); ++s)
      if (q[s + 1] < q[s] - tol) {
        r.holds = false;
        r.witness = LehmannWitness{y, s, s + 1, q[s], q[s + 1]};
        return r;
      }
  }
  return r;
}

// Piecewise-constant acceptance probabilities: alpha[k][x] applies on
// [breakpoints[k], breakpoints[k+1]), the last row thereafter.
struct AcceptanceSchedule {
  std::vector<double> breakpoints{0.0};
  std::vector<std::vector<double>> alpha;
};

inline std::vector<double> experiment_xi(const Environment& env, const AcceptanceSchedule& sched, double t) {
  if (!env.types().uninformed() || !env.conditionally_independent())
    fail(ErrorKind::precondition, "experiment_xi needs an uninformed seller and type-independent signals");
  if (sched.alpha.size() != sched.breakpoints.size() || sched.alpha.empty())
    fail(ErrorKind::argument, "acceptance schedule needs one alpha row per breakpoint");
  const std::size_t k = env.num_states();
  const std::size_t nx = env.signals().size();
  std::vector<double> xi(k, 0.0);
  for (std::size_t seg = 0; seg < sched.alpha.size(); ++seg) {
    if (sched.alpha[seg].size() != nx) fail(ErrorKind::argument, "acceptance row needs one entry per signal");
    const double a = sched.breakpoints[seg];
    const double b = seg + 1 < sched.breakpoints.size() ? sched.breakpoints[seg + 1] : t;
    const double len = std::max(0.0, std::min(b, t) - std::min(a, t));
    if (len == 0.0) continue;
    for (std::size_t s = 0; s < k; ++s) {
      const auto& p = env.node(0);
      double ratio = 0.0;
      for (std::size_t x = 0; x < nx; ++x) ratio += p.f[x][s] / p.f_top[s] * sched.alpha[seg][x];
      xi[s] += len * ratio;
    }
  }
  return xi;
}

}  // namespace waitmarket
