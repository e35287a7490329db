#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "waitmarket/commitment.hpp"
#include "waitmarket/fixtures.hpp"
#include "waitmarket/profile.hpp"

using namespace waitmarket;

namespace {

const double kSbarA0 = std::log(8.0) / 0.1;

bool throws_kind(ErrorKind kind, const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind() == kind;
  }
  return false;
}

// max(0, [ln(mu_h f_h g_h / (mu_l f_l g_l)) + ln(v_h / -v_l)] / (lambda (f_h - f_l)))
double closed_form_exit(const Environment& env, double y) {
  const double mh = env.prior()[1] * env.types().pdf(y, 1) * f_bar(env, y, 1);
  const double ml = env.prior()[0] * env.types().pdf(y, 0) * f_bar(env, y, 0);
  const double t = (std::log(mh / ml) + std::log(env.surplus(1) / -env.surplus(0))) /
                   (env.arrival_rate() * (f_bar(env, y, 1) - f_bar(env, y, 0)));
  return std::max(0.0, t);
}

// Per-type objective t -> sum_w mu v Q(t) g, summed directly.
double node_objective(const Environment& env, std::size_t i, double t) {
  double acc = 0.0;
  for (std::size_t s = 0; s < env.num_states(); ++s)
    acc += env.prior()[s] * env.surplus(s) * env.types().density_at(i, s) *
           (1.0 - std::exp(-env.arrival_rate() * env.node(i).f_top[s] * t));
  return acc;
}

std::vector<Environment> suite() {
  return {fixtures::env_a0(),        fixtures::env_a_ratio(),     fixtures::env_c(),
          fixtures::env_k(2.0),      fixtures::env_k(0.5),        fixtures::env_k(1.0),
          fixtures::figure1(0.5),    fixtures::figure1(0.2),      fixtures::figure1(0.3),
          fixtures::location(1.0),   fixtures::appendix_d2()};
}

}  // namespace

TEST(PosteriorSurplus, EnvA0HandValues) {
  const auto env = fixtures::env_a0();
  EXPECT_NEAR(posterior_surplus(env, 0.0, 0.5), 0.8 * 0.2 - 0.2 * 0.1, 1e-15);
  EXPECT_NEAR(posterior_surplus(env, kSbarA0, 0.5), 0.0, 1e-9);
  EXPECT_NEAR(posterior_surplus(env.with_prior({0.8, 0.2}), 0.0, 0.5), 0.2 * 0.2 - 0.8 * 0.1, 1e-15);
}

TEST(ExitTime, EnvA0) {
  EXPECT_NEAR(exit_time(fixtures::env_a0(), 0.5), kSbarA0, 1e-6);
  EXPECT_EQ(exit_time(fixtures::env_a0(0.2), 0.5), 0.0);
}

TEST(ExitTime, LikelihoodRatioAtSixTenths) {
  EXPECT_NEAR(exit_time(fixtures::env_a_ratio(), 0.6), std::log(8.0 / 0.6) / 0.1, 1e-5);
}

TEST(ExitTime, CapIsRaisedByDoubling) {
  // Tiny arrival rate pushes the exit far beyond the first cap.
  const auto env = fixtures::env_a0().with_arrival_rate(1e-3);
  EXPECT_NEAR(exit_time(env, 0.5), kSbarA0 * 1e3, 1e-4);
}

TEST(ExitTime, HardCapIsReported) {
  const auto env = fixtures::env_a0().with_arrival_rate(1e-6);
  try {
    exit_time(env, 0.5);
    FAIL() << "expected cap error";
  } catch (const CapExceeded& e) {
    EXPECT_EQ(e.cap(), 1048576.0);
  }
}

TEST(ExitProfile, RatioEnvironmentPositiveEverywhere) {
  const auto sol = exit_profile(fixtures::env_a_ratio());
  EXPECT_EQ(sol.threshold.position, ThresholdPosition::below_grid);
  for (double s : sol.exit_times) EXPECT_GT(s, 0.0);
}

TEST(ExitProfile, LowPriorExitsImmediately) {
  const auto env = fixtures::env_a0(0.2);
  const auto sol = exit_profile(env);
  EXPECT_EQ(sol.threshold.position, ThresholdPosition::above_grid);
  for (double s : sol.exit_times) EXPECT_EQ(s, 0.0);
  EXPECT_EQ(commitment_value(env, sol), 0.0);
}

TEST(ExitProfile, InteriorThresholdSeparatesZeroAndPositive) {
  const auto env = fixtures::env_a_ratio(0.25);
  const auto sol = exit_profile(env);
  ASSERT_EQ(sol.threshold.position, ThresholdPosition::interior);
  for (std::size_t i = 0; i < env.num_nodes(); ++i) {
    const double y = env.grid().nodes[i];
    if (y > sol.threshold.y + 1e-9) { EXPECT_GT(sol.exit_times[i], 0.0) << y; }
    if (y < sol.threshold.y - 1e-9) { EXPECT_EQ(sol.exit_times[i], 0.0) << y; }
  }
}

TEST(ExitProfile, FigureOneHighPriorDecreasing) {
  const auto sol = exit_profile(fixtures::figure1(0.5));
  std::size_t rises = 0;
  for (std::size_t i = 1; i < sol.exit_times.size(); ++i) rises += sol.exit_times[i] >= sol.exit_times[i - 1];
  EXPECT_EQ(rises, 0u);
}

TEST(TradeProbability, HandValues) {
  const auto env = fixtures::env_a0();
  EXPECT_EQ(trade_probability(env, 0.0, 0.5, 1), 0.0);
  EXPECT_NEAR(trade_probability(env, kSbarA0, 0.5, 1), 0.984375, 1e-12);
  EXPECT_NEAR(trade_probability(env, kSbarA0, 0.5, 0), 0.875, 1e-12);
}

TEST(CommitmentValue, EnvA0) {
  const auto env = fixtures::env_a0();
  const auto sol = exit_profile(env);
  EXPECT_NEAR(sol.value, 0.8 * 0.984375 - 0.2 * 0.875, 1e-6);
  std::vector<double> doubled(sol.exit_times);
  for (double& s : doubled) s *= 2.0;
  EXPECT_LT(commitment_value_of(env, doubled), sol.value);
}

TEST(PriceRevealed, EnvA0) {
  const auto env = fixtures::env_a0();
  EXPECT_NEAR(price_revealed(env, 0.0, 0.5), 0.34 / 0.18, 1e-9);
  EXPECT_NEAR(price_revealed(env, kSbarA0, 0.5), 1.5, 1e-6);
  const auto flat = env.with_values({3.0, 3.0}, {4.0, 2.0});
  EXPECT_NEAR(price_revealed(flat, 7.0, 0.2), 3.0, 1e-15);
}

TEST(PricePooled, EqualsRevealedForSingleEffectiveType) {
  const auto env = fixtures::env_a0();
  const auto sol = exit_profile(env);
  for (double t : {0.0, 5.0, 20.0}) EXPECT_NEAR(price_pooled(env, sol, t), price_revealed(env, t, 0.5), 1e-12);
  EXPECT_TRUE(throws_kind(ErrorKind::domain, [&] { price_pooled(env, sol, kSbarA0 + 1.0); }));
}

TEST(PricePooled, KumaraswamyUnitShapeIsConstantLater) {
  const auto env = fixtures::env_k(1.0);
  const auto sol = exit_profile(env);
  const double a = sol.inf_exit(), b = sol.sup_exit();
  const double p0 = price_pooled(env, sol, a + 0.01 * (b - a));
  for (double u : {0.2, 0.5, 0.8, 0.99}) EXPECT_NEAR(price_pooled(env, sol, a + u * (b - a)), p0, 1e-6);
}

// Known disagreement: every surviving type at t = 13 has P(high) >= 1/2, which
// bounds the pooled price below by 1.5. See README.
TEST(PricePooled, EnvCGoldenValues) {
  const auto env = fixtures::env_c();
  const auto sol = exit_profile(env);
  EXPECT_NEAR(price_pooled(env, sol, 13.0), 1.196, 0.005);
  EXPECT_NEAR(buyer_posterior_pooled(env, sol, 0, 13.0), 1.261, 0.005);
}

TEST(PricePooled, EnvCMarginalTypeAtThirteen) {
  const auto env = fixtures::env_c();
  EXPECT_NEAR(marginal_type(env, 13.0), 0.30, 0.02);
  const auto set = surviving_types(env, 13.0);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.front().a, 0.2);
}

TEST(BuyerPosterior, RevealedHandValues) {
  const auto env = fixtures::env_a0();
  EXPECT_EQ(buyer_posterior_revealed(env, 1, 3.0, 0.4), price_revealed(env, 3.0, 0.4));
  EXPECT_NEAR(buyer_posterior_revealed(env, 0, 0.0, 0.4), 1.46 / 0.82, 1e-12);
}

TEST(BuyerPosterior, PooledTopEqualsPooledPrice) {
  const auto env = fixtures::env_c();
  const auto sol = exit_profile(env);
  EXPECT_EQ(buyer_posterior_pooled(env, sol, 1, 13.0), price_pooled(env, sol, 13.0));
}

TEST(BuyerPosterior, PooledMonotoneInSignalUnderIndependence) {
  const auto env = fixtures::env_k(2.0);
  const auto sol = exit_profile(env);
  for (double u : {0.0, 0.1, 0.4, 0.7, 0.95}) {
    const double t = u * sol.sup_exit();
    EXPECT_GE(buyer_posterior_pooled(env, sol, 1, t), buyer_posterior_pooled(env, sol, 0, t));
  }
}

TEST(SbarInverse, EndpointsAndRoundTrip) {
  const auto env = fixtures::env_k(2.0);
  const auto sol = exit_profile(env);
  const double lo = sol.exit_times.front(), hi = sol.exit_times.back();
  EXPECT_EQ(sbar_inverse(sol, lo), env.grid().lo);
  EXPECT_EQ(sbar_inverse(sol, hi), env.grid().hi);
  const double t = 0.5 * (lo + hi);
  const double y = sbar_inverse(sol, t);
  EXPECT_NEAR(exit_time(env, y), t, 1e-2);
  EXPECT_TRUE(throws_kind(ErrorKind::domain, [&] { sbar_inverse(sol, hi + 1.0); }));
  EXPECT_TRUE(throws_kind(ErrorKind::precondition, [] { sbar_inverse(exit_profile(fixtures::figure1(0.5)), 10.0); }));
}

TEST(SbarInverse, ZeroSegmentReturnsThreshold) {
  const auto sol = exit_profile(fixtures::env_a_ratio(0.25));
  ASSERT_EQ(sol.threshold.position, ThresholdPosition::interior);
  EXPECT_EQ(sbar_inverse(sol, 0.0), sol.threshold.y);
}

TEST(PriceDynamics, KumaraswamyShapes) {
  const auto r2 = classify_price_dynamics(fixtures::env_k(2.0), exit_profile(fixtures::env_k(2.0)));
  EXPECT_EQ(r2.initial, Trend::decreasing);
  EXPECT_EQ(r2.later, Trend::decreasing);
  EXPECT_TRUE(r2.equivalence_holds());
  const auto rh = classify_price_dynamics(fixtures::env_k(0.5), exit_profile(fixtures::env_k(0.5)));
  EXPECT_EQ(rh.initial, Trend::decreasing);
  EXPECT_EQ(rh.later, Trend::increasing);
  const auto r1 = classify_price_dynamics(fixtures::env_k(1.0), exit_profile(fixtures::env_k(1.0)));
  EXPECT_LT(r1.later_spread, 1e-6);
}

TEST(PriceDynamics, Preconditions) {
  const auto env = fixtures::appendix_d2();
  EXPECT_TRUE(throws_kind(ErrorKind::precondition, [&] { classify_price_dynamics(env, exit_profile(env)); }));
}

TEST(Lehmann, LocationFamily) {
  const auto t1 = fixtures::location(1.0).types();
  const auto t05 = fixtures::location(0.5).types();
  std::vector<double> ys;
  for (int i = 0; i <= 40; ++i) ys.push_back(-2.0 + 0.1 * i);
  EXPECT_TRUE(lehmann_more_informative(t1, t1, ys).holds);
  EXPECT_TRUE(lehmann_more_informative(t05, t1, ys).holds);
  const auto rev = lehmann_more_informative(t1, t05, ys);
  EXPECT_FALSE(rev.holds);
  ASSERT_TRUE(rev.witness.has_value());
  EXPECT_GT(rev.witness->quantile_low, rev.witness->quantile_high);
}

TEST(ExperimentXi, HandValues) {
  const auto env = fixtures::env_a0();
  AcceptanceSchedule only_top{{0.0}, {{0.0, 1.0}}};
  AcceptanceSchedule all{{0.0}, {{1.0, 1.0}}};
  const auto a = experiment_xi(env, only_top, 3.0);
  EXPECT_NEAR(a[0], 3.0, 1e-12);
  EXPECT_NEAR(a[1], 3.0, 1e-12);
  const auto b = experiment_xi(env, all, 1.0);
  EXPECT_NEAR(b[0], 10.0, 1e-12);
  EXPECT_NEAR(b[1], 5.0, 1e-12);
  const auto c = experiment_xi(env, all, 0.0);
  EXPECT_EQ(c[0], 0.0);
  EXPECT_TRUE(throws_kind(ErrorKind::precondition, [&] { experiment_xi(fixtures::env_c(), all, 1.0); }));
}

TEST(DiscountedValue, LimitsAndQuadratureOracle) {
  const auto env = fixtures::env_a0();
  const auto sol = exit_profile(env);
  const auto profile = CutoffStrategyProfile::optimal(sol);
  EXPECT_NEAR(discounted_profile_value(env, profile, 0.0), sol.value, 1e-12);
  EXPECT_NEAR(discounted_profile_value(env, profile, 1e6), 0.0, 1e-4);

  const double delta = 0.01;
  const double s = sol.exit_times.front();
  const std::size_t steps = 200000;
  const double h = s / steps;
  double oracle = 0.0;
  for (std::size_t st = 0; st < 2; ++st) {
    const double q = env.node(0).f_top[st];
    double acc = 0.0;
    for (std::size_t k = 0; k <= steps; ++k) {
      const double t = h * static_cast<double>(k);
      const double w = (k == 0 || k == steps) ? 0.5 : 1.0;
      acc += w * std::exp(-delta * t) * q * std::exp(-q * t);
    }
    oracle += env.prior()[st] * env.surplus(st) * acc * h;
  }
  const double v = discounted_profile_value(env, profile, delta);
  EXPECT_GT(v, 0.0);
  EXPECT_LT(v, 0.6125);
  EXPECT_NEAR(v, oracle, 1e-6);
}

TEST(SignalTrading, ThreeStateExample) {
  const auto env = fixtures::appendix_d2();
  const auto zero = best_signal_exit(env, 1);
  EXPECT_NEAR(zero.exit, 3.9, 0.1);
  EXPECT_NEAR(zero.conditional_surplus, 0.93, 0.01);
  const auto top = probability_matched_exit(env, 2, zero.trade_probability);
  EXPECT_NEAR(top.trade_probability, zero.trade_probability, 1e-10);
  EXPECT_NEAR(top.exit, 10.0, 0.2);
  EXPECT_NEAR(top.conditional_surplus, 0.70, 0.01);
}

TEST(CommitmentProperty, SingleCrossingInTime) {
  for (const auto& env : suite()) {
    const auto sol = exit_profile(env);
    for (std::size_t i = 0; i < env.num_nodes(); i += 25) {
      bool crossed = false;
      for (int k = 0; k <= 400; ++k) {
        const double t = sol.t_cap * k / 400.0;
        const double v = conditional_surplus(env, env.node(i), t);
        if (crossed) { EXPECT_LE(v, 1e-12) << "node " << i << " t " << t; }
        if (v <= 0.0) crossed = true;
      }
    }
  }
}

TEST(CommitmentProperty, BinaryClosedForm) {
  for (const auto& env : suite()) {
    if (env.num_states() != 2 || !env.conditionally_independent()) continue;
    const auto sol = exit_profile(env);
    for (std::size_t i = 0; i < env.num_nodes(); ++i)
      EXPECT_NEAR(sol.exit_times[i], closed_form_exit(env, env.grid().nodes[i]), 1e-8);
  }
}

TEST(CommitmentProperty, BinaryClosedFormWithTypeDependentSignals) {
  for (const auto& env : {fixtures::env_c(), fixtures::figure1(0.3), fixtures::figure1(0.5)}) {
    const auto sol = exit_profile(env);
    for (std::size_t i = 0; i < env.num_nodes(); i += 3)
      EXPECT_NEAR(sol.exit_times[i], closed_form_exit(env, env.grid().nodes[i]), 1e-8);
  }
}

TEST(CommitmentProperty, ExitTimeMaximizesNodeObjective) {
  for (const auto& env : suite()) {
    const auto sol = exit_profile(env);
    for (std::size_t i = 0; i < env.num_nodes(); i += 20) {
      const double s = sol.exit_times[i];
      if (s <= 0.0) continue;
      const double best = node_objective(env, i, s);
      EXPECT_LT(node_objective(env, i, 0.9 * s), best);
      EXPECT_LT(node_objective(env, i, 1.1 * s), best);
    }
  }
}

TEST(CommitmentProperty, IndependentSignalsGiveIncreasingProfiles) {
  for (const auto& env : {fixtures::env_a_ratio(), fixtures::env_k(2.0), fixtures::env_k(0.5), fixtures::location(1.0)}) {
    const auto sol = exit_profile(env);
    for (std::size_t i = 1; i < sol.exit_times.size(); ++i) {
      EXPECT_GE(sol.exit_times[i], sol.exit_times[i - 1]);
      if (sol.exit_times[i - 1] > 0.0) { EXPECT_GT(sol.exit_times[i], sol.exit_times[i - 1]); }
    }
  }
}

TEST(CommitmentProperty, RevealedPriceMonotonicity) {
  const auto env = fixtures::env_a_ratio();
  for (double y : {0.1, 0.5, 0.9}) {
    double prev = price_revealed(env, 0.0, y);
    for (int k = 1; k <= 50; ++k) {
      const double p = price_revealed(env, k * 1.0, y);
      EXPECT_LT(p, prev);
      prev = p;
    }
  }
  double prev = price_revealed(env, 0.0, 0.01);
  for (int k = 1; k < 100; ++k) {
    const double p = price_revealed(env, 0.0, 0.01 * k + 0.005);
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(CommitmentProperty, ValueIsNonnegative) {
  for (const auto& env : suite()) EXPECT_GE(exit_profile(env).value, 0.0);
}

TEST(CommitmentProperty, SharperTopSignalRaisesValue) {
  const double v1 = exit_profile(fixtures::figure1(0.3, 401, 1.0)).value;
  const double v15 = exit_profile(fixtures::figure1(0.3, 401, 1.5)).value;
  EXPECT_GE(v15, v1 - 1e-12);
}

TEST(CommitmentProperty, LessNoisyLocationRaisesValue) {
  EXPECT_GE(exit_profile(fixtures::location(0.5)).value, exit_profile(fixtures::location(1.0)).value - 1e-12);
}

TEST(CommitmentProperty, DiscountingKeepsCutoffArgmax) {
  const auto env = fixtures::env_a0();
  const auto sol = exit_profile(env);
  for (double delta : {0.0, 0.1, 0.01}) {
    auto value = [&](double s) {
      CutoffStrategyProfile p{std::vector<double>(env.num_nodes(), s), Pricing::revealed(), Acceptance::only_top()};
      return discounted_profile_value(env, p, delta);
    };
    // Bisection on the sign of a central difference; the maximum is too flat
    // for a value comparison to locate it to 1e-6.
    double lo = 1.0, hi = 100.0;
    while (hi - lo > 1e-9) {
      const double m = 0.5 * (lo + hi);
      (value(m + 1e-6) > value(m - 1e-6) ? lo : hi) = m;
    }
    EXPECT_NEAR(0.5 * (lo + hi), sol.exit_times.front(), 1e-6) << delta;
  }
}
