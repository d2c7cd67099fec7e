// Reference computations used by the tests. None of these call into the
// library's numerical code; they are deliberately plain and slow.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline double kl(const Vec& p, const Vec& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

inline double tv(const Vec& p, const Vec& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

inline double dot(const Vec& a, const Vec& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// pi * exp(a / beta), normalized, in long double without any shift.
inline Vec tilt(const Vec& pi, const Vec& a, double beta) {
  std::vector<long double> w(pi.size());
  long double z = 0.0L;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    w[i] = pi[i] * std::exp(static_cast<long double>(a[i]) / beta);
    z += w[i];
  }
  Vec out(pi.size());
  for (std::size_t i = 0; i < pi.size(); ++i) {
    out[i] = static_cast<double>(w[i] / z);
  }
  return out;
}

// One-state dual l0(beta) from its definition; the max is pulled out of the
// log so tiny beta neither overflows nor underflows.
inline double dual(const Vec& pi, const Vec& a, double beta, double delta) {
  const long double top = *std::max_element(a.begin(), a.end());
  long double m = 0.0L;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    m += pi[i] * std::exp((a[i] - top) / beta);
  }
  return static_cast<double>(beta * delta + beta * std::log(m) + top);
}

// Euclidean projection onto {p : sum p = 1, p_i >= floor}.
inline Vec project_simplex(const Vec& y, double floor) {
  const std::size_t n = y.size();
  const double mass = 1.0 - floor * static_cast<double>(n);
  Vec u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = y[i] - floor;
  Vec s = u;
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += s[k];
    const double t = (cum - mass) / static_cast<double>(k + 1);
    if (s[k] - t > 0.0) theta = t;
  }
  Vec p(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::max(u[i] - theta, 0.0) + floor;
  }
  return p;
}

// max_p E_p[a] subject to KL(p || pi) <= delta over the probability simplex,
// by an augmented Lagrangian whose inner problems are solved with projected
// gradient ascent and Armijo backtracking.
inline Vec kl_constrained_argmax(const Vec& pi, const Vec& a, double delta) {
  const std::size_t n = pi.size();
  const double floor = 1e-300;
  Vec p = pi;
  double mu = 0.0;
  double rho = 10.0;

  auto penalty_arg = [&](const Vec& q) { return kl(q, pi) - delta + mu / rho; };
  auto value = [&](const Vec& q) {
    const double h = std::max(0.0, penalty_arg(q));
    return dot(a, q) - 0.5 * rho * h * h;
  };
  auto gradient = [&](const Vec& q) {
    const double h = std::max(0.0, penalty_arg(q));
    Vec g(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = a[i] - rho * h * (std::log(q[i] / pi[i]) + 1.0);
    }
    return g;
  };

  for (int outer = 0; outer < 60; ++outer) {
    double step = 1.0;
    for (int inner = 0; inner < 20000; ++inner) {
      const Vec g = gradient(p);
      const double f = value(p);
      Vec next;
      bool moved = false;
      for (int bt = 0; bt < 80; ++bt) {
        Vec y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = p[i] + step * g[i];
        next = project_simplex(y, floor);
        Vec d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = next[i] - p[i];
        const double lin = dot(g, d);
        if (lin <= 0.0) break;
        if (value(next) >= f + 1e-4 * lin) {
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      double change = 0.0;
      for (std::size_t i = 0; i < n; ++i) change += std::abs(next[i] - p[i]);
      p = next;
      step *= 2.0;
      if (change < 1e-15) break;
    }
    const double violation = kl(p, pi) - delta;
    mu = std::max(0.0, mu + rho * violation);
    if (std::abs(violation) < 1e-10 || (violation < 0.0 && mu == 0.0)) {
      if (outer > 5) break;
    }
    rho = std::min(rho * 2.0, 1e6);
  }
  return p;
}

// Grid search for argmin over a log-spaced beta grid.
template <typename F>
double grid_argmin(F&& objective, double lo, double hi, std::size_t points) {
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  double best_x = lo;
  double best_f = objective(lo);
  for (std::size_t i = 1; i < points; ++i) {
    const double x =
        std::exp(llo + (lhi - llo) * static_cast<double>(i) /
                           static_cast<double>(points - 1));
    const double f = objective(x);
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
  }
  return best_x;
}

// Hand evaluation of one customer-hour of the market model.
struct MarketHand {
  double c_curt, consumption, profit, dissatisfaction, cost, reward;
};

inline MarketHand market_hand(double d_crit, double d_curt, double xi,
                              double wholesale, double price, double alpha,
                              double beta, double rho) {
  MarketHand h{};
  h.c_curt = d_curt * (1.0 + xi * (price - wholesale) / wholesale);
  if (h.c_curt < 0.0) h.c_curt = 0.0;
  h.consumption = d_crit + h.c_curt;
  h.profit = (price - wholesale) * h.consumption;
  const double cut = d_curt - h.c_curt;
  h.dissatisfaction = alpha / 2.0 * cut * cut + beta * cut;
  h.cost = price * h.consumption + h.dissatisfaction;
  h.reward = rho * h.profit - (1.0 - rho) * h.cost;
  return h;
}

}  // namespace oracle
