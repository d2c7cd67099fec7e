// One-dimensional Lagrangian dual of the KL trust-region policy problem:
//
//   l0(beta) = beta * delta + E_s[ beta * log E_{a~pi}[exp(A(s,a) / beta)] ]
//
// minimized over beta >= beta_min. Its derivative is delta minus the expected
// KL divergence of the exponentially tilted policy from pi, so l0 is convex
// and an interior minimizer puts the tilted policy exactly on the trust-region
// boundary.

#pragma once

#include <cstdint>
#include <stdexcept>

#include "nptrust/advantage.hpp"

namespace nptrust {

struct TrustRegionSpec {
  double delta = 0.05;
  double beta_min = 1e-6;
  int hops = 3;
  double local_tol = 1e-8;
  double beta_init = 1.0;
  // Basin-hopping perturbation: uniform in [-hop_step, hop_step] on log(beta).
  double hop_step = 2.0;
  // Metropolis temperature for accepting an uphill basin.
  double temperature = 1.0;
  int max_local_iterations = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DualSolution {
  double beta_star = 0.0;
  double objective = 0.0;
  double grad_at_solution = 0.0;
  bool clamped = false;
  // Diagnostics.
  int hops_converged = 0;
  int evaluations = 0;
};

class DualSolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double dual_objective(double beta, const AdvantageBatch& batch,
                      const TrustRegionSpec& spec);

double dual_gradient(double beta, const AdvantageBatch& batch,
                     const TrustRegionSpec& spec);

/// Expected KL(pi_beta || pi) of the tilted policy, with the same state
/// weighting as the dual. Equals delta - dual_gradient(beta).
double tilted_kl(double beta, const AdvantageBatch& batch);

/// Basin hopping on log(beta) with a gradient-descent local phase, followed
/// by a bracketing refinement of the root of the gradient. The returned
/// beta always satisfies dual_gradient >= 0, i.e. the tilted policy stays
/// inside the trust region.
DualSolution solve_beta(const AdvantageBatch& batch,
                        const TrustRegionSpec& spec);

}  // namespace nptrust
