// Return and advantage estimation plus the tabular value baseline.

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nptrust/mdp.hpp"
#include "nptrust/state_key.hpp"

namespace nptrust {

/// Tabular V(s). Unseen keys read as 0.
class ValueTable {
 public:
  explicit ValueTable(double learning_rate);

  double value(const StateKey& key) const;
  void set(const StateKey& key, double v) { table_[key] = v; }

  double learning_rate() const { return learning_rate_; }
  const std::map<StateKey, double>& entries() const { return table_; }

 private:
  double learning_rate_;
  std::map<StateKey, double> table_;
};

struct AdvantageEntry {
  std::vector<double> action;  // price vector, or a single price per factor
  double advantage = 0.0;
  double weight = 1.0;  // old-policy probability, particle weight or 1
};

/// A distribution over actions that the expectation E_a[...] runs over. A
/// joint or particle policy has one factor per state; a factored policy has
/// one per customer and the state's expectation is the product over factors.
struct ActionFactor {
  std::vector<AdvantageEntry> entries;
};

struct StateGroup {
  double visits = 0.0;  // weight of this state in E_s[...]
  std::vector<ActionFactor> factors;
};

struct AdvantageBatch {
  std::map<StateKey, StateGroup> groups;
  std::size_t total_count = 0;

  bool empty() const { return groups.empty(); }
  /// Throws if a group or factor is empty, weights are invalid or an
  /// advantage is not finite.
  void validate() const;
};

enum class EstimatorKind { kMonteCarlo, kGae, kNStep };

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::kMonteCarlo;
  double gae_lambda = 0.95;
  int td_n = 4;
};

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator(const std::string& name);

/// sum_{k<n} lambda^k r_{t+k} + lambda^n V(s_{t+n}); falls back to the
/// Monte-Carlo tail when t+n runs past the end of a complete episode.
double nstep_return(const Trajectory& traj, std::size_t t, int n,
                    const ValueTable& values, const DiscountSpec& disc,
                    const KeyScheme& scheme);

/// Per-step advantage estimates, aligned with traj.steps.
std::vector<double> mc_step_advantages(const Trajectory& traj,
                                       const ValueTable& values,
                                       const DiscountSpec& disc,
                                       const KeyScheme& scheme);
std::vector<double> gae_step_advantages(const Trajectory& traj,
                                        const ValueTable& values,
                                        const DiscountSpec& disc,
                                        double gae_lambda,
                                        const KeyScheme& scheme);
std::vector<double> nstep_step_advantages(const Trajectory& traj,
                                          const ValueTable& values,
                                          const DiscountSpec& disc, int n,
                                          const KeyScheme& scheme);
std::vector<double> step_advantages(const Trajectory& traj,
                                    const ValueTable& values,
                                    const DiscountSpec& disc,
                                    const EstimatorConfig& est,
                                    const KeyScheme& scheme);

/// Sampled (action, advantage) pairs grouped by state key. Every sample gets
/// weight 1, so the group's weighted mean is the on-policy Monte-Carlo
/// estimate of E_{a~pi}.
AdvantageBatch mc_advantages(const Trajectory& traj, const ValueTable& values,
                             const DiscountSpec& disc, const KeyScheme& scheme);
AdvantageBatch gae_advantages(const Trajectory& traj, const ValueTable& values,
                              const DiscountSpec& disc, double gae_lambda,
                              const KeyScheme& scheme);

/// Mean of (R_t - V(s_t))^2 over every step of the batch.
double value_loss(const ValueTable& values, std::span<const Trajectory> batch,
                  const DiscountSpec& disc, const KeyScheme& scheme);

/// One gradient step on sum (R_t - V(s_t))^2; for a table the gradient at a
/// key is -2 * sum over its visits of the residual.
ValueTable value_update(const ValueTable& values,
                        std::span<const Trajectory> batch,
                        const DiscountSpec& disc, const KeyScheme& scheme);

}  // namespace nptrust
