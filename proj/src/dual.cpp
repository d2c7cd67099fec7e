#include "nptrust/dual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace nptrust {

void TrustRegionSpec::validate() const {
  if (!(delta > 0.0 && std::isfinite(delta))) {
    throw std::invalid_argument("delta must be > 0");
  }
  if (!(beta_min > 0.0 && std::isfinite(beta_min))) {
    throw std::invalid_argument("beta_min must be > 0");
  }
  if (hops < 1) throw std::invalid_argument("basin_hops must be >= 1");
  if (!(local_tol > 0.0)) throw std::invalid_argument("local_tol must be > 0");
  if (!(beta_init > 0.0 && std::isfinite(beta_init))) {
    throw std::invalid_argument("beta_init must be > 0");
  }
  if (!(hop_step > 0.0)) throw std::invalid_argument("hop_step must be > 0");
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("temperature must be > 0");
  }
  if (max_local_iterations < 1) {
    throw std::invalid_argument("max_local_iterations must be >= 1");
  }
}

namespace {

// Normalized view of a batch: per state a weight, per factor the normalized
// action weights, the advantages and their max over the support.
struct Factor {
  std::vector<double> prob;
  std::vector<double> adv;
  double max_adv = 0.0;
};

struct State {
  double weight = 0.0;
  std::vector<Factor> factors;
};

std::vector<State> prepare(const AdvantageBatch& batch) {
  batch.validate();
  double total_visits = 0.0;
  for (const auto& [key, g] : batch.groups) total_visits += g.visits;

  std::vector<State> states;
  states.reserve(batch.groups.size());
  for (const auto& [key, g] : batch.groups) {
    State s;
    s.weight = g.visits / total_visits;
    for (const auto& f : g.factors) {
      Factor out;
      double mass = 0.0;
      for (const auto& e : f.entries) mass += e.weight;
      out.max_adv = -std::numeric_limits<double>::infinity();
      for (const auto& e : f.entries) {
        if (e.weight <= 0.0) continue;
        out.prob.push_back(e.weight / mass);
        out.adv.push_back(e.advantage);
        out.max_adv = std::max(out.max_adv, e.advantage);
      }
      s.factors.push_back(std::move(out));
    }
    states.push_back(std::move(s));
  }
  return states;
}

struct Eval {
  double objective = 0.0;
  double gradient = 0.0;
  double kl = 0.0;
};

// All sums use exp((A - max A) / beta) <= 1.
Eval evaluate(double beta, double delta, const std::vector<State>& states) {
  Eval ev;
  double obj = 0.0;
  double kl = 0.0;
  for (const auto& s : states) {
    double obj_s = 0.0;
    double kl_s = 0.0;
    for (const auto& f : s.factors) {
      double z = 0.0;
      double zs = 0.0;
      for (std::size_t j = 0; j < f.prob.size(); ++j) {
        const double shifted = f.adv[j] - f.max_adv;
        const double w = f.prob[j] * std::exp(shifted / beta);
        z += w;
        zs += w * shifted;
      }
      const double log_z = std::log(z);
      obj_s += beta * log_z + f.max_adv;
      kl_s += zs / (beta * z) - log_z;
    }
    obj += s.weight * obj_s;
    kl += s.weight * kl_s;
  }
  // Rounding can push a vanishing KL a hair below zero.
  kl = std::max(kl, 0.0);
  ev.objective = beta * delta + obj;
  ev.kl = kl;
  ev.gradient = delta - kl;
  return ev;
}

void check_beta(double beta, const TrustRegionSpec& spec) {
  if (!(beta >= spec.beta_min) || !std::isfinite(beta)) {
    throw std::domain_error("beta " + std::to_string(beta) +
                            " below beta_min or not finite");
  }
}

class Solver {
 public:
  Solver(const AdvantageBatch& batch, const TrustRegionSpec& spec)
      : spec_(spec), states_(prepare(batch)), x_min_(std::log(spec.beta_min)) {}

  Eval at(double x) {
    ++evaluations_;
    return evaluate(std::exp(x), spec_.delta, states_);
  }

  // d l0 / d log(beta)
  static double slope(const Eval& ev, double x) {
    return ev.gradient * std::exp(x);
  }

  bool stationary(const Eval& ev, double x) const {
    if (std::abs(ev.gradient) <= spec_.local_tol) return true;
    // One-sided optimality on the boundary.
    return x <= x_min_ && ev.gradient >= -spec_.local_tol;
  }

  // Gradient descent on log(beta) with Barzilai-Borwein step lengths and an
  // Armijo backtracking safeguard.
  double local_descent(double x, bool* converged) {
    x = std::max(x, x_min_);
    Eval ev = at(x);
    double g = slope(ev, x);
    double step = 1.0 / std::max(1.0, std::abs(g));
    *converged = false;
    for (int it = 0; it < spec_.max_local_iterations; ++it) {
      if (stationary(ev, x)) {
        *converged = true;
        break;
      }
      double trial_x = x;
      Eval trial;
      bool accepted = false;
      double s = step;
      for (int bt = 0; bt < 60; ++bt) {
        trial_x = std::max(x_min_, x - s * g);
        if (trial_x == x) break;
        trial = at(trial_x);
        if (trial.objective <=
            ev.objective - 1e-4 * std::abs(g * (trial_x - x))) {
          accepted = true;
          break;
        }
        s *= 0.5;
      }
      if (!accepted) break;
      const double trial_g = slope(trial, trial_x);
      const double dx = trial_x - x;
      const double dg = trial_g - g;
      step = (dx * dg > 0.0) ? dx / dg : 2.0 * s;
      x = trial_x;
      ev = trial;
      g = trial_g;
    }
    return x;
  }

  double gradient_at(double x) { return at(x).gradient; }

  // Smallest log(beta) in the bracket with gradient >= 0, refined until the
  // bracket is a few ulps wide.
  double refine_root(double x_hint) {
    double lo = std::max(x_hint, x_min_);
    double hi = lo;
    if (gradient_at(lo) < 0.0) {
      double width = 1.0;
      hi = lo + width;
      while (gradient_at(hi) < 0.0) {
        lo = hi;
        width *= 2.0;
        hi = lo + width;
        if (hi > 700.0) throw DualSolverError("dual root not bracketed");
      }
    } else {
      double width = 1.0;
      lo = std::max(x_min_, hi - width);
      while (lo > x_min_ && gradient_at(lo) >= 0.0) {
        hi = lo;
        width *= 2.0;
        lo = std::max(x_min_, hi - width);
      }
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (gradient_at(mid) < 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return hi;
  }

  DualSolution solve() {
    std::mt19937_64 rng(spec_.seed);
    std::uniform_real_distribution<double> perturb(-spec_.hop_step,
                                                   spec_.hop_step);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    DualSolution sol;
    bool converged = false;
    double current = local_descent(std::log(spec_.beta_init), &converged);
    double current_f = at(current).objective;
    double best = current;
    double best_f = current_f;
    sol.hops_converged += converged ? 1 : 0;

    for (int h = 0; h < spec_.hops; ++h) {
      const double start = std::max(x_min_, current + perturb(rng));
      const double found = local_descent(start, &converged);
      sol.hops_converged += converged ? 1 : 0;
      const double f = at(found).objective;
      if (f < current_f ||
          unit(rng) < std::exp(-(f - current_f) / spec_.temperature)) {
        current = found;
        current_f = f;
      }
      if (f < best_f) {
        best = found;
        best_f = f;
      }
    }

    const Eval boundary = at(x_min_);
    double x_star;
    if (boundary.gradient >= 0.0) {
      sol.clamped = true;
      x_star = x_min_;
    } else {
      x_star = refine_root(best);
    }
    const Eval final_eval = at(x_star);
    sol.beta_star = sol.clamped ? spec_.beta_min : std::exp(x_star);
    sol.objective = final_eval.objective;
    sol.grad_at_solution = final_eval.gradient;
    sol.evaluations = evaluations_;
    if (!sol.clamped && std::abs(sol.grad_at_solution) > spec_.local_tol) {
      throw DualSolverError(
          "dual solve did not reach local_tol: |gradient| = " +
          std::to_string(std::abs(sol.grad_at_solution)) + " at beta = " +
          std::to_string(sol.beta_star));
    }
    return sol;
  }

 private:
  const TrustRegionSpec& spec_;
  std::vector<State> states_;
  double x_min_;
  int evaluations_ = 0;
};

}  // namespace

double dual_objective(double beta, const AdvantageBatch& batch,
                      const TrustRegionSpec& spec) {
  check_beta(beta, spec);
  return evaluate(beta, spec.delta, prepare(batch)).objective;
}

double dual_gradient(double beta, const AdvantageBatch& batch,
                     const TrustRegionSpec& spec) {
  check_beta(beta, spec);
  return evaluate(beta, spec.delta, prepare(batch)).gradient;
}

double tilted_kl(double beta, const AdvantageBatch& batch) {
  if (!(beta > 0.0)) throw std::domain_error("beta must be > 0");
  return evaluate(beta, 0.0, prepare(batch)).kl;
}

DualSolution solve_beta(const AdvantageBatch& batch,
                        const TrustRegionSpec& spec) {
  spec.validate();
  Solver solver(batch, spec);
  return solver.solve();
}

}  // namespace nptrust
