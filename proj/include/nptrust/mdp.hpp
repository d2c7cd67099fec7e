// Episodic MDP records shared by the market simulator, the estimators and
// the trainer.

#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <vector>

namespace nptrust {

/// Energy split into the critical part (always served) and the curtailable
/// part (responds to price), in kWh.
struct LoadPair {
  double critical = 0.0;
  double curtailable = 0.0;

  double total() const { return critical + curtailable; }
};

/// What the pricing agent sees at the start of hour `t` (1-based).
///
/// `prev_consumption` is the consumption realized in hour t-1 (zeros at t=1).
/// The current hour's consumption depends on the prices chosen now, so it is
/// part of the transition output rather than the observation.
struct Observation {
  int t = 1;
  std::vector<LoadPair> base_demand;
  std::vector<LoadPair> prev_consumption;

  std::size_t customers() const { return base_demand.size(); }
  double total_base_demand() const;
};

/// Retail price per customer, $/kWh.
struct PriceAction {
  std::vector<double> prices;
};

struct Step {
  Observation observation;
  PriceAction action;
  double reward = 0.0;
  std::vector<double> customer_rewards;
  std::vector<LoadPair> consumption;
};

struct Trajectory {
  std::vector<Step> steps;
  bool complete = false;
  // Observation following the last step; only meaningful for truncated
  // rollouts, where it provides the bootstrap state.
  std::optional<Observation> final_observation;

  std::size_t size() const { return steps.size(); }
};

class DiscountSpec {
 public:
  explicit DiscountSpec(double lambda);

  double lambda() const { return lambda_; }

 private:
  double lambda_;
};

/// Discounted return from step index `t` (0-based) to the end of a complete
/// trajectory.
double total_return(const Trajectory& traj, const DiscountSpec& disc,
                    std::size_t t);

/// Discounted returns for every step of a complete trajectory.
std::vector<double> all_returns(const Trajectory& traj,
                                const DiscountSpec& disc);

/// Undiscounted sum of step rewards.
double episode_reward(const Trajectory& traj);

/// One line per step: t, then per customer price, demand pair and
/// consumption pair, then the reward. Comma separated with a header row.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace nptrust
