#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "waitmarket/error.hpp"
#include "waitmarket/numerics.hpp"

namespace waitmarket {

struct Affine {
  double intercept = 0.0;
  double slope = 1.0;
  double operator()(double e) const { return intercept + slope * e; }
};

namespace detail {

inline double lerp_on(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - xs.begin());
  const double w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
  return ys[j - 1] + w * (ys[j] - ys[j - 1]);
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Signals

namespace signal_family {

// f[x][state], independent of the seller's type.
struct Table {
  std::vector<std::vector<double>> f;
};

// Binary test: f(top|y,w) = 1 - (1 - psi_y(y)) (1 - psi_w(w)).
struct OrTest {
  Affine psi_y;
  Affine psi_omega;
};

// Binary test: f(top|y,w) = psi_y(y) psi_w(w)^rho.
struct AndTest {
  Affine psi_y;
  Affine psi_omega;
  double rho = 1.0;
};

// Binary test: f(top|y,w) = 1 / (1 + exp(-slope_w y)).
struct Logistic {
  std::vector<double> slopes;
};

// f[x][state][node] on the listed nodes, linear in between.
struct GridTable {
  std::vector<double> nodes;
  std::vector<std::vector<std::vector<double>>> f;
};

}  // namespace signal_family

class SignalModel {
 public:
  using Family = std::variant<signal_family::Table, signal_family::OrTest, signal_family::AndTest,
                              signal_family::Logistic, signal_family::GridTable>;

  SignalModel() = default;
  SignalModel(std::vector<double> values, Family family) : values_(std::move(values)), family_(std::move(family)) {
    if (values_.size() < 2) fail(ErrorKind::argument, "signal set needs at least two signals");
    for (std::size_t i = 1; i < values_.size(); ++i)
      if (!(values_[i] > values_[i - 1])) fail(ErrorKind::argument, "signal values must be strictly increasing");
    if (!std::holds_alternative<signal_family::Table>(family_) &&
        !std::holds_alternative<signal_family::GridTable>(family_) && values_.size() != 2)
      fail(ErrorKind::argument, "binary-test signal families need exactly two signals");
  }

  static SignalModel table(std::vector<double> values, std::vector<std::vector<double>> f) {
    return SignalModel(std::move(values), signal_family::Table{std::move(f)});
  }
  // Two signals {0,1}; `top[s]` is the probability of signal 1 in state s.
  static SignalModel binary(std::vector<double> top) {
    std::vector<double> low(top.size());
    for (std::size_t s = 0; s < top.size(); ++s) low[s] = 1.0 - top[s];
    return table({0.0, 1.0}, {low, top});
  }

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  std::size_t top() const { return values_.size() - 1; }
  const Family& family() const { return family_; }

  std::string kind() const {
    switch (family_.index()) {
      case 0: return "conditionally-independent-table";
      case 1: return "binary-test-or";
      case 2: return "binary-test-and";
      case 3: return "logistic";
      default: return "type-grid-table";
    }
  }

  bool type_independent() const { return std::holds_alternative<signal_family::Table>(family_); }

  void check_shape(std::size_t n_states) const {
    if (const auto* t = std::get_if<signal_family::Table>(&family_)) {
      if (t->f.size() != values_.size()) fail(ErrorKind::argument, "signal table needs one row per signal");
      for (const auto& row : t->f)
        if (row.size() != n_states) fail(ErrorKind::argument, "signal table rows need one entry per state");
    } else if (const auto* l = std::get_if<signal_family::Logistic>(&family_)) {
      if (l->slopes.size() != n_states) fail(ErrorKind::argument, "logistic signal needs one slope per state");
    } else if (const auto* g = std::get_if<signal_family::GridTable>(&family_)) {
      if (g->f.size() != values_.size()) fail(ErrorKind::argument, "signal grid table needs one block per signal");
      for (const auto& block : g->f) {
        if (block.size() != n_states) fail(ErrorKind::argument, "signal grid table needs one row per state");
        for (const auto& row : block)
          if (row.size() != g->nodes.size()) fail(ErrorKind::argument, "signal grid table rows need one entry per node");
      }
    }
  }

  // f(x | y, state); `omega` is the state's value.
  double prob(std::size_t x, double y, std::size_t state, double omega) const {
    return std::visit(
        [&](const auto& fam) -> double {
          using T = std::decay_t<decltype(fam)>;
          if constexpr (std::is_same_v<T, signal_family::Table>) {
            return fam.f[x][state];
          } else if constexpr (std::is_same_v<T, signal_family::GridTable>) {
            return detail::lerp_on(fam.nodes, fam.f[x][state], y);
          } else {
            double top_p = 0.0;
            if constexpr (std::is_same_v<T, signal_family::OrTest>)
              top_p = 1.0 - (1.0 - fam.psi_y(y)) * (1.0 - fam.psi_omega(omega));
            else if constexpr (std::is_same_v<T, signal_family::AndTest>)
              top_p = fam.psi_y(y) * std::pow(fam.psi_omega(omega), fam.rho);
            else
              top_p = 1.0 / (1.0 + std::exp(-fam.slopes[state] * y));
            return x == 1 ? top_p : 1.0 - top_p;
          }
        },
        family_);
  }

 private:
  std::vector<double> values_;
  Family family_;
};

// ---------------------------------------------------------------------------
// Seller types

enum class LocationNoise { normal, gumbel_min };

namespace type_family {

struct Uninformed {};

// g(y|low)/g(y|high) = ratio(y), g(y|high) uniform; binary states only.
struct LikelihoodRatio {
  Affine ratio;
};

// G(y|w) = (1 - (1 - y)^a_w)^b on [0, 1].
struct FlippedKumaraswamy {
  std::vector<double> a;
  double b = 1.0;
};

// y = w + scale * eps, truncated to the type interval.
struct Location {
  LocationNoise noise = LocationNoise::normal;
  double scale = 1.0;
};

// Densities tabulated at the grid nodes, one row per state.
struct Tabulated {
  std::vector<std::vector<double>> density;
};

}  // namespace type_family

class TypeModel {
 public:
  using Family = std::variant<type_family::Uninformed, type_family::LikelihoodRatio, type_family::FlippedKumaraswamy,
                              type_family::Location, type_family::Tabulated>;

  TypeModel() = default;
  TypeModel(TypeGrid grid, Family family, std::vector<double> state_values)
      : grid_(std::move(grid)), family_(std::move(family)), states_(std::move(state_values)) {
    build();
  }

  const TypeGrid& grid() const { return grid_; }
  const Family& family() const { return family_; }
  std::size_t num_states() const { return states_.size(); }
  double lo() const { return grid_.lo; }
  double hi() const { return grid_.hi; }

  std::string kind() const {
    switch (family_.index()) {
      case 0: return "uninformed";
      case 1: return "likelihood-ratio";
      case 2: return "kumaraswamy-flipped";
      case 3: return "location";
      default: return "tabulated";
    }
  }

  bool uninformed() const { return std::holds_alternative<type_family::Uninformed>(family_); }

  // Mass of each state's type distribution relative to the high-state
  // reference before per-state normalization; 1 except for likelihood ratios.
  std::vector<double> reference_masses() const {
    std::vector<double> m(states_.size(), 1.0);
    if (const auto* r = std::get_if<type_family::LikelihoodRatio>(&family_)) m[0] = r->ratio(0.5 * (lo() + hi()));
    return m;
  }

  double pdf(double y, std::size_t s) const {
    check_y(y);
    return std::visit(
        [&](const auto& fam) -> double {
          using T = std::decay_t<decltype(fam)>;
          const double len = hi() - lo();
          if constexpr (std::is_same_v<T, type_family::Uninformed>) {
            return 1.0 / len;
          } else if constexpr (std::is_same_v<T, type_family::LikelihoodRatio>) {
            if (s == 1) return 1.0 / len;
            return fam.ratio(y) / (ratio_mean_ * len);
          } else if constexpr (std::is_same_v<T, type_family::FlippedKumaraswamy>) {
            const double a = fam.a[s];
            const double inner = 1.0 - std::pow(1.0 - y, a);
            return fam.b * std::pow(inner, fam.b - 1.0) * a * std::pow(1.0 - y, a - 1.0);
          } else if constexpr (std::is_same_v<T, type_family::Location>) {
            const double z = (y - states_[s]) / fam.scale;
            return noise_pdf(fam.noise, z) / (fam.scale * location_mass_[s]);
          } else {
            return detail::lerp_on(grid_.nodes, fam.density[s], y);
          }
        },
        family_);
  }

  double cdf(double y, std::size_t s) const {
    check_y(y);
    return std::visit(
        [&](const auto& fam) -> double {
          using T = std::decay_t<decltype(fam)>;
          const double len = hi() - lo();
          if constexpr (std::is_same_v<T, type_family::Uninformed>) {
            return (y - lo()) / len;
          } else if constexpr (std::is_same_v<T, type_family::LikelihoodRatio>) {
            if (s == 1) return (y - lo()) / len;
            const double integral = fam.ratio.intercept * (y - lo()) + 0.5 * fam.ratio.slope * (y * y - lo() * lo());
            return integral / (ratio_mean_ * len);
          } else if constexpr (std::is_same_v<T, type_family::FlippedKumaraswamy>) {
            return std::pow(1.0 - std::pow(1.0 - y, fam.a[s]), fam.b);
          } else if constexpr (std::is_same_v<T, type_family::Location>) {
            const double lo_z = (lo() - states_[s]) / fam.scale;
            const double z = (y - states_[s]) / fam.scale;
            return (noise_cdf(fam.noise, z) - noise_cdf(fam.noise, lo_z)) / location_mass_[s];
          } else {
            return detail::lerp_on(edges_, tab_cdf_edges_[s], y);
          }
        },
        family_);
  }

  // 1 - G(y|w), evaluated without cancellation near the top of the interval.
  double survival(double y, std::size_t s) const {
    check_y(y);
    return std::visit(
        [&](const auto& fam) -> double {
          using T = std::decay_t<decltype(fam)>;
          const double len = hi() - lo();
          if constexpr (std::is_same_v<T, type_family::Uninformed>) {
            return (hi() - y) / len;
          } else if constexpr (std::is_same_v<T, type_family::LikelihoodRatio>) {
            if (s == 1) return (hi() - y) / len;
            const double integral = fam.ratio.intercept * (hi() - y) + 0.5 * fam.ratio.slope * (hi() * hi() - y * y);
            return integral / (ratio_mean_ * len);
          } else if constexpr (std::is_same_v<T, type_family::FlippedKumaraswamy>) {
            return -std::expm1(fam.b * std::log1p(-std::pow(1.0 - y, fam.a[s])));
          } else if constexpr (std::is_same_v<T, type_family::Location>) {
            const double hi_z = (hi() - states_[s]) / fam.scale;
            const double z = (y - states_[s]) / fam.scale;
            return (noise_sf(fam.noise, z) - noise_sf(fam.noise, hi_z)) / location_mass_[s];
          } else {
            return 1.0 - cdf(y, s);
          }
        },
        family_);
  }

  // Cached per-node quantities.
  double density_at(std::size_t node, std::size_t s) const { return density_[s][node]; }
  double mass_at(std::size_t node, std::size_t s) const { return mass_[s][node]; }
  double cdf_at(std::size_t node, std::size_t s) const { return cdf_[s][node]; }
  const std::vector<double>& masses(std::size_t s) const { return mass_[s]; }
  const std::vector<double>& densities(std::size_t s) const { return density_[s]; }
  double total_mass(std::size_t s) const { return total_mass_[s]; }

 private:
  static double noise_pdf(LocationNoise n, double z) {
    if (n == LocationNoise::normal) return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    return std::exp(z - std::exp(z));
  }
  static double noise_cdf(LocationNoise n, double z) {
    if (n == LocationNoise::normal) return 0.5 * std::erfc(-z / std::sqrt(2.0));
    return -std::expm1(-std::exp(z));
  }
  static double noise_sf(LocationNoise n, double z) {
    if (n == LocationNoise::normal) return 0.5 * std::erfc(z / std::sqrt(2.0));
    return std::exp(-std::exp(z));
  }

  void check_y(double y) const {
    const double slack = 1e-12 * (hi() - lo());
    if (!(y >= lo() - slack && y <= hi() + slack))
      fail(ErrorKind::domain, "type " + detail::fmt(y) + " outside [" + detail::fmt(lo()) + ", " + detail::fmt(hi()) + "]");
  }

  void build() {
    const std::size_t k = states_.size();
    const std::size_t n = grid_.size();
    if (k < 2) fail(ErrorKind::argument, "type model needs at least two states");
    if (auto* tab = std::get_if<type_family::Tabulated>(&family_)) normalize_table(*tab);
    std::visit(
        [&](const auto& fam) {
          using T = std::decay_t<decltype(fam)>;
          if constexpr (std::is_same_v<T, type_family::LikelihoodRatio>) {
            if (k != 2) fail(ErrorKind::argument, "likelihood-ratio types need exactly two states");
            ratio_mean_ = fam.ratio(0.5 * (lo() + hi()));
            if (!(fam.ratio(lo()) > 0.0 && fam.ratio(hi()) > 0.0))
              fail(ErrorKind::argument, "likelihood ratio must be positive on the type interval");
          } else if constexpr (std::is_same_v<T, type_family::FlippedKumaraswamy>) {
            if (fam.a.size() != k) fail(ErrorKind::argument, "kumaraswamy-flipped needs one exponent a per state");
            if (!(fam.b > 0.0)) fail(ErrorKind::argument, "kumaraswamy-flipped needs b > 0");
            for (double a : fam.a)
              if (!(a > 0.0)) fail(ErrorKind::argument, "kumaraswamy-flipped needs a > 0");
            if (lo() < 0.0 || hi() > 1.0) fail(ErrorKind::argument, "kumaraswamy-flipped types live in [0, 1]");
          } else if constexpr (std::is_same_v<T, type_family::Location>) {
            if (!(fam.scale > 0.0)) fail(ErrorKind::argument, "location scale must be > 0");
            location_mass_.resize(k);
            for (std::size_t s = 0; s < k; ++s) {
              const double a = noise_cdf(fam.noise, (lo() - states_[s]) / fam.scale);
              const double b = noise_cdf(fam.noise, (hi() - states_[s]) / fam.scale);
              location_mass_[s] = b - a;
              if (!(location_mass_[s] > 0.0)) fail(ErrorKind::argument, "location noise has no mass on the type interval");
            }
          }
        },
        family_);

    density_.assign(k, std::vector<double>(n));
    mass_.assign(k, std::vector<double>(n));
    cdf_.assign(k, std::vector<double>(n));
    total_mass_.assign(k, 0.0);
    for (std::size_t s = 0; s < k; ++s) {
      double prev = cdf(grid_.lo, s);
      for (std::size_t i = 0; i < n; ++i) {
        density_[s][i] = pdf(grid_.nodes[i], s);
        cdf_[s][i] = cdf(grid_.nodes[i], s);
        const double next = cdf(grid_.edge(i + 1), s);
        mass_[s][i] = next - prev;
        prev = next;
      }
      total_mass_[s] = std::accumulate(mass_[s].begin(), mass_[s].end(), 0.0);
    }
  }

  void normalize_table(type_family::Tabulated& tab) {
    const std::size_t k = states_.size();
    const std::size_t n = grid_.size();
    if (tab.density.size() != k) fail(ErrorKind::argument, "tabulated types need one density row per state");
    edges_.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) edges_[i] = grid_.edge(i);
    tab_cdf_edges_.assign(k, std::vector<double>(n + 1, 0.0));
    for (std::size_t s = 0; s < k; ++s) {
      auto& row = tab.density[s];
      if (row.size() != n) fail(ErrorKind::argument, "tabulated density rows need one entry per grid node");
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += grid_.weights[i] * row[i];
      if (!(total > 0.0)) fail(ErrorKind::argument, "tabulated density has no mass");
      for (double& v : row) v /= total;
      for (std::size_t i = 0; i < n; ++i) tab_cdf_edges_[s][i + 1] = tab_cdf_edges_[s][i] + grid_.weights[i] * row[i];
      tab_cdf_edges_[s][n] = 1.0;
    }
  }

  TypeGrid grid_;
  Family family_;
  std::vector<double> states_;
  double ratio_mean_ = 1.0;
  std::vector<double> location_mass_;
  std::vector<double> edges_;
  std::vector<std::vector<double>> tab_cdf_edges_;
  std::vector<std::vector<double>> density_;
  std::vector<std::vector<double>> mass_;
  std::vector<std::vector<double>> cdf_;
  std::vector<double> total_mass_;
};

// ---------------------------------------------------------------------------
// Environment

// Prior and signal data at one seller type, in the form consumed by the
// posterior formulas: log(mu g) per state and the signal probabilities.
struct TypePoint {
  double y = 0.0;
  std::vector<double> log_prior_density;
  std::vector<double> f_top;
  std::vector<std::vector<double>> f;  // f[x][state]
};

class Environment {
 public:
  Environment() = default;
  Environment(std::vector<double> states, std::vector<double> prior, std::vector<double> v_buyer,
              std::vector<double> v_seller, SignalModel signals, TypeModel types, double arrival_rate)
      : states_(std::move(states)),
        prior_(std::move(prior)),
        v_buyer_(std::move(v_buyer)),
        v_seller_(std::move(v_seller)),
        signals_(std::move(signals)),
        types_(std::move(types)),
        lambda_(arrival_rate) {
    build();
  }

  std::size_t num_states() const { return states_.size(); }
  std::size_t num_nodes() const { return types_.grid().size(); }
  const std::vector<double>& states() const { return states_; }
  const std::vector<double>& prior() const { return prior_; }
  const std::vector<double>& v_buyer() const { return v_buyer_; }
  const std::vector<double>& v_seller() const { return v_seller_; }
  const SignalModel& signals() const { return signals_; }
  const TypeModel& types() const { return types_; }
  const TypeGrid& grid() const { return types_.grid(); }
  double arrival_rate() const { return lambda_; }
  std::size_t top_signal() const { return signals_.top(); }
  bool conditionally_independent() const { return signals_.type_independent(); }

  double surplus(std::size_t s) const {
    check_state(s);
    return v_buyer_[s] - v_seller_[s];
  }

  double signal_prob(std::size_t x, double y, std::size_t s) const {
    check_state(s);
    if (x >= signals_.size()) fail(ErrorKind::argument, "signal index out of range");
    check_span(y);
    return signals_.prob(x, y, s, states_[s]);
  }

  const TypePoint& node(std::size_t i) const { return nodes_.at(i); }

  TypePoint point(double y) const {
    check_span(y);
    TypePoint p;
    p.y = y;
    const std::size_t k = num_states();
    p.log_prior_density.resize(k);
    p.f_top.resize(k);
    p.f.assign(signals_.size(), std::vector<double>(k));
    for (std::size_t s = 0; s < k; ++s) {
      p.log_prior_density[s] = std::log(prior_[s]) + std::log(types_.pdf(y, s));
      for (std::size_t x = 0; x < signals_.size(); ++x) p.f[x][s] = signals_.prob(x, y, s, states_[s]);
      p.f_top[s] = p.f[signals_.top()][s];
    }
    return p;
  }

  Environment with_prior(std::vector<double> prior) const {
    return Environment(states_, std::move(prior), v_buyer_, v_seller_, signals_, types_, lambda_);
  }
  Environment with_values(std::vector<double> v_buyer, std::vector<double> v_seller) const {
    return Environment(states_, prior_, std::move(v_buyer), std::move(v_seller), signals_, types_, lambda_);
  }
  Environment with_signals(SignalModel signals) const {
    return Environment(states_, prior_, v_buyer_, v_seller_, std::move(signals), types_, lambda_);
  }
  Environment with_types(TypeModel types) const {
    return Environment(states_, prior_, v_buyer_, v_seller_, signals_, std::move(types), lambda_);
  }
  Environment with_arrival_rate(double rate) const {
    return Environment(states_, prior_, v_buyer_, v_seller_, signals_, types_, rate);
  }

  void check_state(std::size_t s) const {
    if (s >= states_.size()) fail(ErrorKind::argument, "state index " + std::to_string(s) + " out of range");
  }

  void check_span(double y) const {
    const auto& g = grid();
    const double slack = 1e-12 * (g.hi - g.lo);
    if (!(y >= g.lo - slack && y <= g.hi + slack))
      fail(ErrorKind::domain, "type " + detail::fmt(y) + " outside [" + detail::fmt(g.lo) + ", " + detail::fmt(g.hi) + "]");
  }

 private:
  void build() {
    const std::size_t k = states_.size();
    if (k < 2) fail(ErrorKind::argument, "environment needs at least two states");
    if (prior_.size() != k || v_buyer_.size() != k || v_seller_.size() != k)
      fail(ErrorKind::argument, "prior and value vectors need one entry per state");
    if (types_.num_states() != k) fail(ErrorKind::argument, "type model state count differs from environment");
    for (std::size_t s = 1; s < k; ++s)
      if (!(states_[s] > states_[s - 1])) fail(ErrorKind::argument, "states must be strictly increasing");
    for (std::size_t s = 0; s < k; ++s)
      if (!std::isfinite(prior_[s]) || !std::isfinite(v_buyer_[s]) || !std::isfinite(v_seller_[s]))
        fail(ErrorKind::argument, "prior and values must be finite");
    if (!(lambda_ > 0.0) || !std::isfinite(lambda_)) fail(ErrorKind::argument, "arrival_rate must be > 0");
    signals_.check_shape(k);

    const std::size_t n = num_nodes();
    nodes_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      TypePoint& p = nodes_[i];
      p.y = grid().nodes[i];
      p.log_prior_density.resize(k);
      p.f_top.resize(k);
      p.f.assign(signals_.size(), std::vector<double>(k));
      for (std::size_t s = 0; s < k; ++s) {
        p.log_prior_density[s] = std::log(prior_[s]) + std::log(types_.density_at(i, s));
        for (std::size_t x = 0; x < signals_.size(); ++x) p.f[x][s] = signals_.prob(x, p.y, s, states_[s]);
        p.f_top[s] = p.f[signals_.top()][s];
      }
    }
  }

  std::vector<double> states_;
  std::vector<double> prior_;
  std::vector<double> v_buyer_;
  std::vector<double> v_seller_;
  SignalModel signals_;
  TypeModel types_;
  double lambda_ = 1.0;
  std::vector<TypePoint> nodes_;
};

// Posterior mean of `values` over states with log-weights
// log(mu g) + log f(x) - lambda f_top t at a type point.
template <class Values>
double posterior_mean(const Environment& env, const TypePoint& p, std::size_t x, double t, const Values& values) {
  const std::size_t k = env.num_states();
  double lw[16];
  std::vector<double> heap;
  double* w = lw;
  if (k > 16) {
    heap.resize(k);
    w = heap.data();
  }
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < k; ++s) {
    w[s] = p.log_prior_density[s] + std::log(p.f[x][s]) - env.arrival_rate() * p.f_top[s] * t;
    m = std::max(m, w[s]);
  }
  if (!std::isfinite(m)) fail(ErrorKind::numeric, "posterior weights vanish at type " + detail::fmt(p.y));
  double num = 0.0;
  double den = 0.0;
  for (std::size_t s = 0; s < k; ++s) {
    const double e = std::exp(w[s] - m);
    num += e * values[s];
    den += e;
  }
  return num / den;
}

inline std::vector<double> surplus_vector(const Environment& env) {
  std::vector<double> v(env.num_states());
  for (std::size_t s = 0; s < v.size(); ++s) v[s] = env.surplus(s);
  return v;
}

// ---------------------------------------------------------------------------
// Primitive queries

inline double surplus(const Environment& env, std::size_t s) { return env.surplus(s); }

struct CrossingState {
  std::size_t last_negative = 0;
  std::size_t first_positive = 0;
  bool exact_zero = false;
};

inline CrossingState crossing_state(const Environment& env) {
  const auto v = surplus_vector(env);
  for (std::size_t s = 0; s < v.size(); ++s) {
    if (std::abs(v[s]) <= 1e-12) {
      if (s == 0 || s + 1 == v.size() || !(v[s - 1] < 0.0 && v[s + 1] > 0.0)) break;
      return {s, s, true};
    }
    if (v[s] > 0.0) {
      if (s == 0) break;
      return {s - 1, s, false};
    }
  }
  fail(ErrorKind::invalid_environment, "surplus has no sign change from negative to positive");
}

inline double f_bar(const Environment& env, double y, std::size_t s) { return env.signal_prob(env.top_signal(), y, s); }

inline double hazard_rate(const Environment& env, double y, std::size_t s) {
  env.check_state(s);
  const double S = env.types().survival(y, s);
  if (!(S > 0.0))
    fail(ErrorKind::singularity, "hazard rate undefined at type " + detail::fmt(y) + ": cdf reaches 1");
  return env.types().pdf(y, s) / S;
}

// r_G(y|high) / r_G(y|low) for binary environments.
inline double hazard_ratio(const Environment& env, double y) {
  if (env.num_states() != 2) fail(ErrorKind::precondition, "hazard ratio needs a binary state space");
  return hazard_rate(env, y, 1) / hazard_rate(env, y, 0);
}

inline std::vector<double> posterior_type_belief(const Environment& env, double y) {
  const TypePoint p = env.point(y);
  const std::size_t k = env.num_states();
  std::vector<double> post(k);
  const double m = *std::max_element(p.log_prior_density.begin(), p.log_prior_density.end());
  double total = 0.0;
  for (std::size_t s = 0; s < k; ++s) total += post[s] = std::exp(p.log_prior_density[s] - m);
  for (double& q : post) q /= total;
  return post;
}

// ---------------------------------------------------------------------------
// Validation

struct CheckResult {
  char label = 'a';
  std::string name;
  bool passed = true;
  std::string detail;
  double magnitude = 0.0;
};

struct ValidationReport {
  std::vector<CheckResult> checks;

  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }
  const CheckResult& check(char label) const {
    for (const auto& c : checks)
      if (c.label == label) return c;
    fail(ErrorKind::argument, std::string("no validation check labelled ") + label);
  }
  std::string to_string() const {
    std::ostringstream os;
    for (const auto& c : checks) {
      os << '(' << c.label << ") " << c.name << ": " << (c.passed ? "pass" : "FAIL");
      if (!c.detail.empty()) os << " - " << c.detail;
      os << '\n';
    }
    return os.str();
  }
};

inline constexpr double kLogSupermodularMargin = 1e-12;

inline ValidationReport validate(const Environment& env) {
  const std::size_t k = env.num_states();
  const std::size_t n = env.num_nodes();
  const std::size_t nx = env.signals().size();
  ValidationReport r;

  {
    CheckResult c{'a', "buyer-value-increasing", true, {}, 0.0};
    for (std::size_t s = 0; s + 1 < k; ++s) {
      const double d = env.v_buyer()[s + 1] - env.v_buyer()[s];
      if (!(d > 0.0) && (c.passed || d < c.magnitude)) {
        c.passed = false;
        c.magnitude = d;
        c.detail = "v_buyer not increasing between states " + std::to_string(s) + " and " + std::to_string(s + 1);
      }
    }
    r.checks.push_back(c);
  }
  {
    CheckResult c{'b', "surplus-single-crossing", true, {}, 0.0};
    const auto v = surplus_vector(env);
    const bool has_neg = std::any_of(v.begin(), v.end(), [](double x) { return x < 0.0; });
    const bool has_pos = std::any_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
    std::size_t zeros = 0;
    bool seen_nonneg = false;
    for (std::size_t s = 0; s < k; ++s) {
      if (v[s] == 0.0) ++zeros;
      if (v[s] < 0.0 && seen_nonneg) {
        c.passed = false;
        c.magnitude = v[s];
        c.detail = "surplus negative at state " + std::to_string(s) + " after a nonnegative state";
        break;
      }
      if (v[s] >= 0.0) seen_nonneg = true;
      if (s > 0 && v[s] == 0.0 && v[s - 1] == 0.0) {
        c.passed = false;
        c.detail = "surplus zero at consecutive states " + std::to_string(s - 1) + ", " + std::to_string(s);
        break;
      }
    }
    if (c.passed && !(has_neg && has_pos)) {
      c.passed = false;
      c.detail = "surplus has no interior sign change";
    }
    (void)zeros;
    r.checks.push_back(c);
  }
  {
    CheckResult c{'c', "signal-full-support", true, {}, 0.0};
    for (std::size_t i = 0; i < n && c.passed; ++i) {
      const auto& p = env.node(i);
      for (std::size_t s = 0; s < k; ++s) {
        double sum = 0.0;
        for (std::size_t x = 0; x < nx; ++x) {
          sum += p.f[x][s];
          if (!(p.f[x][s] > 0.0) && c.passed) {
            c.passed = false;
            c.magnitude = p.f[x][s];
            c.detail = "f(x=" + std::to_string(x) + "|y=" + detail::fmt(p.y) + ", state " + std::to_string(s) +
                       ") = " + detail::fmt(p.f[x][s]);
          }
        }
        if (std::abs(sum - 1.0) > 1e-12 && c.passed) {
          c.passed = false;
          c.magnitude = sum - 1.0;
          c.detail = "signal probabilities sum to " + detail::fmt(sum) + " at y=" + detail::fmt(p.y) + ", state " +
                     std::to_string(s);
        }
      }
    }
    r.checks.push_back(c);
  }
  {
    CheckResult c{'d', "log-supermodularity", true, {}, 0.0};
    const bool waive_y_strict = env.types().uninformed();
    auto note = [&](double margin, bool strict, const std::string& where) {
      const bool bad = strict ? !(margin > kLogSupermodularMargin) : margin < -kLogSupermodularMargin;
      if (bad && (c.passed || margin < c.magnitude)) {
        c.passed = false;
        c.magnitude = margin;
        c.detail = where + " cross difference " + detail::fmt(margin);
      }
    };
    if (r.checks[2].passed) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto& p = env.node(i);
        for (std::size_t x = 0; x + 1 < nx; ++x)
          for (std::size_t s = 0; s + 1 < k; ++s) {
            const double m = std::log(p.f[x + 1][s + 1]) + std::log(p.f[x][s]) - std::log(p.f[x + 1][s]) -
                             std::log(p.f[x][s + 1]);
            note(m, true, "(x,state) at y=" + detail::fmt(p.y) + ", x=" + std::to_string(x) + ", state=" + std::to_string(s));
          }
      }
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto& p = env.node(i);
        const auto& q = env.node(i + 1);
        auto lh = [&](const TypePoint& t, std::size_t x, std::size_t s) {
          return t.log_prior_density[s] - std::log(env.prior()[s]) + std::log(t.f[x][s]);
        };
        for (std::size_t x = 0; x < nx; ++x)
          for (std::size_t s = 0; s + 1 < k; ++s) {
            const double m = lh(q, x, s + 1) + lh(p, x, s) - lh(q, x, s) - lh(p, x, s + 1);
            note(m, !waive_y_strict,
                 "(y,state) at y=" + detail::fmt(p.y) + ", x=" + std::to_string(x) + ", state=" + std::to_string(s));
          }
        for (std::size_t s = 0; s < k; ++s)
          for (std::size_t x = 0; x + 1 < nx; ++x) {
            const double m = std::log(q.f[x + 1][s]) + std::log(p.f[x][s]) - std::log(p.f[x + 1][s]) - std::log(q.f[x][s]);
            note(m, false, "(x,y) at y=" + detail::fmt(p.y) + ", x=" + std::to_string(x) + ", state=" + std::to_string(s));
          }
      }
    } else {
      c.passed = false;
      c.detail = "not evaluated: signal probabilities lack full support";
    }
    if (c.passed && waive_y_strict) c.detail = "uninformed seller: (y,state) strictness not applicable";
    r.checks.push_back(c);
  }
  {
    CheckResult c{'e', "top-signal-monotone", true, {}, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = env.node(i);
      for (std::size_t s = 0; s + 1 < k; ++s) {
        const double d = p.f_top[s + 1] - p.f_top[s];
        if (!(d > 0.0) && (c.passed || d < c.magnitude)) {
          c.passed = false;
          c.magnitude = d;
          c.detail = "f(top|y=" + detail::fmt(p.y) + ") not increasing between states " + std::to_string(s) + " and " +
                     std::to_string(s + 1);
        }
      }
    }
    r.checks.push_back(c);
  }
  {
    CheckResult c{'f', "feasibility", true, {}, 0.0};
    const auto& p = env.node(n - 1);
    double acc = 0.0;
    for (std::size_t s = 0; s < k; ++s) acc += env.surplus(s) * std::exp(p.log_prior_density[s]) * p.f_top[s];
    c.magnitude = acc;
    if (!(acc > 0.0)) {
      c.passed = false;
      c.detail = "posterior surplus at the largest type y=" + detail::fmt(p.y) + " is " + detail::fmt(acc);
    }
    r.checks.push_back(c);
  }
  {
    CheckResult c{'g', "normalization", true, {}, 0.0};
    double sum = 0.0;
    for (std::size_t s = 0; s < k; ++s) {
      sum += env.prior()[s];
      if (!(env.prior()[s] > 0.0) && c.passed) {
        c.passed = false;
        c.detail = "prior not strictly positive at state " + std::to_string(s);
      }
    }
    if (c.passed && std::abs(sum - 1.0) > 1e-12) {
      c.passed = false;
      c.magnitude = sum - 1.0;
      c.detail = "prior sums to " + detail::fmt(sum);
    }
    for (std::size_t s = 0; s < k && c.passed; ++s) {
      const double total = env.types().total_mass(s);
      if (std::abs(total - 1.0) > 1e-8) {
        c.passed = false;
        c.magnitude = total - 1.0;
        c.detail = "type density of state " + std::to_string(s) + " integrates to " + detail::fmt(total);
      }
      for (std::size_t i = 0; i < n && c.passed; ++i)
        if (!(env.types().density_at(i, s) > 0.0)) {
          c.passed = false;
          c.detail = "type density not positive at y=" + detail::fmt(env.grid().nodes[i]) + ", state " + std::to_string(s);
        }
    }
    r.checks.push_back(c);
  }
  return r;
}

}  // namespace waitmarket
