#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "waitmarket/error.hpp"

namespace waitmarket {

struct Tolerances {
  double time = 1e-9;
  double value = 1e-12;
  double fixed_point = 1e-9;
};

// Quadrature nodes on [lo, hi]. Nodes built by `midpoint` sit at cell centres
// and are strictly interior; `trapezoid` includes both endpoints.
struct TypeGrid {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> nodes;
  std::vector<double> weights;

  static TypeGrid midpoint(double lo, double hi, std::size_t n) {
    check_span(lo, hi, n, 1);
    TypeGrid g;
    g.lo = lo;
    g.hi = hi;
    const double h = (hi - lo) / static_cast<double>(n);
    g.nodes.resize(n);
    g.weights.assign(n, h);
    for (std::size_t i = 0; i < n; ++i) g.nodes[i] = lo + (static_cast<double>(i) + 0.5) * h;
    return g;
  }

  static TypeGrid trapezoid(double lo, double hi, std::size_t n) {
    check_span(lo, hi, n, 2);
    TypeGrid g;
    g.lo = lo;
    g.hi = hi;
    const double h = (hi - lo) / static_cast<double>(n - 1);
    g.nodes.resize(n);
    g.weights.assign(n, h);
    for (std::size_t i = 0; i < n; ++i) g.nodes[i] = lo + static_cast<double>(i) * h;
    g.nodes.back() = hi;
    g.weights.front() = g.weights.back() = 0.5 * h;
    return g;
  }

  std::size_t size() const { return nodes.size(); }

  // Left edge of the cell around node i (midpoint grids).
  double edge(std::size_t i) const {
    const double h = (hi - lo) / static_cast<double>(nodes.size());
    return i == nodes.size() ? hi : lo + static_cast<double>(i) * h;
  }

 private:
  static void check_span(double lo, double hi, std::size_t n, std::size_t min_n) {
    if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi))
      fail(ErrorKind::argument, "type interval must satisfy lo < hi");
    if (n < min_n) fail(ErrorKind::argument, "type grid needs at least " + std::to_string(min_n) + " nodes");
  }
};

inline double integrate_on_grid(const TypeGrid& grid, std::span<const double> values) {
  if (values.size() != grid.weights.size())
    fail(ErrorKind::argument, "integrate_on_grid: " + std::to_string(values.size()) + " values for " +
                                  std::to_string(grid.weights.size()) + " nodes");
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      fail(ErrorKind::numeric, "integrate_on_grid: non-finite value at node " + std::to_string(i));
    sum += grid.weights[i] * values[i];
  }
  return sum;
}

// Pairwise summation; the result depends only on the order of `xs`.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

namespace detail {

inline double checked(double v, const char* what) {
  if (!std::isfinite(v)) fail(ErrorKind::numeric, std::string(what) + ": non-finite function value");
  return v;
}

}  // namespace detail

// min{t >= 0 : fn(t) <= 0} for fn strictly single-crossing from above.
template <class Fn>
double first_crossing_time(Fn&& fn, double t_cap, double tol_t = 1e-9, double tol_f = 1e-12) {
  if (!(t_cap > 0.0) || !(tol_t > 0.0) || !(tol_f >= 0.0))
    fail(ErrorKind::argument, "first_crossing_time: cap and tolerances must be positive");
  if (detail::checked(fn(0.0), "first_crossing_time") <= tol_f) return 0.0;

  double lo = 0.0;
  double hi = std::min(1.0, t_cap);
  while (detail::checked(fn(hi), "first_crossing_time") > 0.0) {
    if (hi >= t_cap) {
      if (fn(hi) > tol_f)
        throw CapExceeded(t_cap, "first_crossing_time: no crossing before cap " + std::to_string(t_cap));
      return hi;
    }
    lo = hi;
    hi = std::min(2.0 * hi, t_cap);
  }
  for (int it = 0; it < 400 && hi - lo > tol_t; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (detail::checked(fn(mid), "first_crossing_time") > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Solves p = map(p) on [lo, hi] given map(lo) > lo and map(hi) < hi.
template <class Map>
double bisect_monotone_fixed_point(Map&& map, double lo, double hi, double tol = 1e-9, int max_iter = 300) {
  if (!(lo < hi)) fail(ErrorKind::argument, "bisect_monotone_fixed_point: need lo < hi");
  const double dlo = detail::checked(map(lo), "bisect_monotone_fixed_point") - lo;
  const double dhi = detail::checked(map(hi), "bisect_monotone_fixed_point") - hi;
  if (std::abs(dlo) <= tol) return lo;
  if (std::abs(dhi) <= tol) return hi;
  if (!(dlo > 0.0 && dhi < 0.0))
    fail(ErrorKind::no_bracket, "bisect_monotone_fixed_point: map(lo) - lo = " + std::to_string(dlo) +
                                    ", map(hi) - hi = " + std::to_string(dhi));
  for (int it = 0; it < max_iter; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double d = detail::checked(map(mid), "bisect_monotone_fixed_point") - mid;
    if (std::abs(d) <= tol && hi - lo <= tol) return mid;
    if (mid <= lo || mid >= hi) break;
    if (d > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  fail(ErrorKind::convergence, "bisect_monotone_fixed_point: residual above tolerance after bisection budget");
}

// Inverse of an increasing cdf on [lo, hi].
template <class Cdf>
double quantile_from_cdf(Cdf&& cdf, double lo, double hi, double q, double tol = 1e-12) {
  const double clo = cdf(lo);
  const double chi = cdf(hi);
  if (!(q >= clo - tol && q <= chi + tol))
    fail(ErrorKind::domain, "quantile_from_cdf: q = " + std::to_string(q) + " outside [" + std::to_string(clo) +
                                ", " + std::to_string(chi) + "]");
  if (q >= chi) return hi;
  if (q <= clo) return lo;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double c = cdf(mid);
    if (!std::isfinite(c)) fail(ErrorKind::numeric, "quantile_from_cdf: non-finite cdf value");
    if (c < q)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Gauss-Legendre nodes and weights on [-1, 1].
inline constexpr std::array<double, 4> kGauss4Nodes = {-0.8611363115940526, -0.3399810435848563,
                                                       0.3399810435848563, 0.8611363115940526};
inline constexpr std::array<double, 4> kGauss4Weights = {0.3478548451374538, 0.6521451548625461,
                                                         0.6521451548625461, 0.3478548451374538};

template <class Fn>
double gauss_legendre(Fn&& fn, double a, double b, std::size_t panels) {
  if (!(b > a)) return 0.0;
  const double h = (b - a) / static_cast<double>(panels);
  double sum = 0.0;
  for (std::size_t k = 0; k < panels; ++k) {
    const double c = a + (static_cast<double>(k) + 0.5) * h;
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += kGauss4Weights[j] * fn(c + 0.5 * h * kGauss4Nodes[j]);
    sum += 0.5 * h * s;
  }
  return sum;
}

// Worker count: hardware concurrency capped by WAITMARKET_THREADS.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("WAITMARKET_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

// Calls body(i) for i in [0, n). Each index is visited exactly once, so bodies
// that write only to slot i produce scheduling-independent results.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace waitmarket
