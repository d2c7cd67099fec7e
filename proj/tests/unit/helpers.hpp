#pragma once

#include <vector>

#include "nptrust/mdp.hpp"

namespace testing {

// Complete trajectory with the given rewards at hours 1..n.
inline nptrust::Trajectory reward_trajectory(const std::vector<double>& rewards,
                                             bool complete = true) {
  nptrust::Trajectory traj;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    nptrust::Step s;
    s.observation.t = static_cast<int>(i + 1);
    s.reward = rewards[i];
    s.customer_rewards = {rewards[i]};
    traj.steps.push_back(s);
  }
  traj.complete = complete;
  return traj;
}

}  // namespace testing
