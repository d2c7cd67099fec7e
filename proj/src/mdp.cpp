#include "nptrust/mdp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nptrust {

double Observation::total_base_demand() const {
  double sum = 0.0;
  for (const auto& d : base_demand) sum += d.total();
  return sum;
}

DiscountSpec::DiscountSpec(double lambda) : lambda_(lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("discount must lie in (0, 1], got " +
                                std::to_string(lambda));
  }
}

double total_return(const Trajectory& traj, const DiscountSpec& disc,
                    std::size_t t) {
  if (!traj.complete) {
    throw std::invalid_argument(
        "total_return needs a complete trajectory; use an n-step estimate");
  }
  if (t >= traj.size()) {
    throw std::out_of_range("step index " + std::to_string(t) +
                            " outside trajectory of length " +
                            std::to_string(traj.size()));
  }
  // Accumulate backwards so each factor is applied once.
  double ret = 0.0;
  for (std::size_t k = traj.size(); k-- > t;) {
    ret = traj.steps[k].reward + disc.lambda() * ret;
  }
  return ret;
}

std::vector<double> all_returns(const Trajectory& traj,
                                const DiscountSpec& disc) {
  if (!traj.complete) {
    throw std::invalid_argument("all_returns needs a complete trajectory");
  }
  std::vector<double> out(traj.size());
  double ret = 0.0;
  for (std::size_t k = traj.size(); k-- > 0;) {
    ret = traj.steps[k].reward + disc.lambda() * ret;
    out[k] = ret;
  }
  return out;
}

double episode_reward(const Trajectory& traj) {
  double sum = 0.0;
  for (const auto& s : traj.steps) sum += s.reward;
  return sum;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const std::size_t n =
      traj.steps.empty() ? 0 : traj.steps.front().action.prices.size();
  os << "t";
  for (std::size_t i = 0; i < n; ++i) {
    os << ",price_" << i << ",demand_crit_" << i << ",demand_curt_" << i
       << ",cons_crit_" << i << ",cons_curt_" << i;
  }
  os << ",reward\n";
  const auto old_precision = os.precision(17);
  for (const auto& s : traj.steps) {
    os << s.observation.t;
    for (std::size_t i = 0; i < n; ++i) {
      os << ',' << s.action.prices[i] << ','
         << s.observation.base_demand[i].critical << ','
         << s.observation.base_demand[i].curtailable << ','
         << s.consumption[i].critical << ',' << s.consumption[i].curtailable;
    }
    os << ',' << s.reward << '\n';
  }
  os.precision(old_precision);
}

}  // namespace nptrust
