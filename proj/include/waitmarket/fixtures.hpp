#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "waitmarket/model.hpp"

namespace waitmarket {

inline constexpr std::size_t kDefaultGridNodes = 401;

// Prior rescaled by each state's reference mass, so that mu(w) g(y|w) keeps
// the ratio a likelihood-ratio family prescribes while every g integrates to 1.
inline std::vector<double> joint_prior(const std::vector<double>& prior, const TypeModel& types) {
  const auto masses = types.reference_masses();
  std::vector<double> out(prior.size());
  double total = 0.0;
  for (std::size_t s = 0; s < prior.size(); ++s) total += out[s] = prior[s] * masses[s];
  for (double& p : out) p /= total;
  return out;
}

namespace fixtures {

inline Environment env_a0(double prior_high = 0.8, std::size_t nodes = kDefaultGridNodes) {
  const std::vector<double> states{0.0, 1.0};
  return Environment(states, {1.0 - prior_high, prior_high}, {1.0, 2.0}, {2.0, 1.0}, SignalModel::binary({0.1, 0.2}),
                     TypeModel(TypeGrid::midpoint(0.0, 1.0, nodes), type_family::Uninformed{}, states), 1.0);
}

// ENV-A values with g(y|low)/g(y|high) = 1 - 2y/3 on [0, 1].
inline Environment env_a_ratio(double prior_high = 0.8, std::size_t nodes = kDefaultGridNodes) {
  const std::vector<double> states{0.0, 1.0};
  TypeModel types(TypeGrid::midpoint(0.0, 1.0, nodes), type_family::LikelihoodRatio{{1.0, -2.0 / 3.0}}, states);
  const auto prior = joint_prior({1.0 - prior_high, prior_high}, types);
  return Environment(states, prior, {1.0, 2.0}, {2.0, 1.0}, SignalModel::binary({0.1, 0.2}), std::move(types), 1.0);
}

// Types on [0.2, 1] with ratio 1 - 2y/3 and logistic top-signal probabilities.
inline Environment env_c(std::size_t nodes = kDefaultGridNodes) {
  const std::vector<double> states{0.0, 1.0};
  TypeModel types(TypeGrid::midpoint(0.2, 1.0, nodes), type_family::LikelihoodRatio{{1.0, -2.0 / 3.0}}, states);
  const auto prior = joint_prior({0.4, 0.6}, types);
  return Environment(states, prior, {1.0, 2.0}, {2.0, 1.0},
                     SignalModel({0.0, 1.0}, signal_family::Logistic{{0.75, 1.5}}), std::move(types), 1.0);
}

// Flipped Kumaraswamy types, a = 2 in the low state and 1 in the high state.
inline Environment env_k(double b, std::size_t nodes = kDefaultGridNodes) {
  const std::vector<double> states{0.0, 1.0};
  return Environment(states, {0.2, 0.8}, {1.0, 2.0}, {2.0, 1.0}, SignalModel::binary({0.1, 0.2}),
                     TypeModel(TypeGrid::midpoint(0.0, 1.0, nodes), type_family::FlippedKumaraswamy{{2.0, 1.0}, b}, states),
                     1.0);
}

// AND test with psi(e) = 1/5 + 3e/5, types with ratio 1 - 2y/3 on [0, 1].
inline Environment figure1(double prior_high, std::size_t nodes = kDefaultGridNodes, double rho = 1.0) {
  const std::vector<double> states{0.0, 1.0};
  const Affine psi{0.2, 0.6};
  TypeModel types(TypeGrid::midpoint(0.0, 1.0, nodes), type_family::LikelihoodRatio{{1.0, -2.0 / 3.0}}, states);
  const auto prior = joint_prior({1.0 - prior_high, prior_high}, types);
  return Environment(states, prior, {1.0, 2.0}, {2.0, 1.0}, SignalModel({0.0, 1.0}, signal_family::AndTest{psi, psi, rho}),
                     std::move(types), 1.0);
}

// Three states {-1, 0, 1} with v = (-1, 2, 0.1), f(x|w) proportional to
// exp(-a_x |x - w|), a = (2.2, 2, 2.2), uninformed seller.
inline Environment appendix_d2(std::size_t nodes = kDefaultGridNodes) {
  const std::vector<double> states{-1.0, 0.0, 1.0};
  const std::vector<double> xs{-1.0, 0.0, 1.0};
  const std::vector<double> a{2.2, 2.0, 2.2};
  std::vector<std::vector<double>> f(3, std::vector<double>(3));
  for (std::size_t s = 0; s < 3; ++s) {
    double total = 0.0;
    for (std::size_t x = 0; x < 3; ++x) total += f[x][s] = std::exp(-a[x] * std::abs(xs[x] - states[s]));
    for (std::size_t x = 0; x < 3; ++x) f[x][s] /= total;
  }
  const std::vector<double> vb{0.0, 3.0, 3.5};
  const std::vector<double> vs{1.0, 1.0, 3.4};
  return Environment(states, {1.0 / 3, 1.0 / 3, 1.0 / 3}, vb, vs, SignalModel::table(xs, f),
                     TypeModel(TypeGrid::midpoint(0.0, 1.0, nodes), type_family::Uninformed{}, states), 1.0);
}

// ENV-A values with location types y = w + scale * eps on [-8, 9].
inline Environment location(double scale, LocationNoise noise = LocationNoise::normal, std::size_t nodes = 801) {
  const std::vector<double> states{0.0, 1.0};
  return Environment(states, {0.2, 0.8}, {1.0, 2.0}, {2.0, 1.0}, SignalModel::binary({0.1, 0.2}),
                     TypeModel(TypeGrid::midpoint(-8.0, 9.0, nodes), type_family::Location{noise, scale}, states), 1.0);
}

}  // namespace fixtures
}  // namespace waitmarket
