#include "nptrust/advantage.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nptrust {

ValueTable::ValueTable(double learning_rate) : learning_rate_(learning_rate) {
  if (!(learning_rate > 0.0 && std::isfinite(learning_rate))) {
    throw std::invalid_argument("value learning rate must be > 0");
  }
}

double ValueTable::value(const StateKey& key) const {
  auto it = table_.find(key);
  return it == table_.end() ? 0.0 : it->second;
}

void AdvantageBatch::validate() const {
  if (groups.empty()) throw std::invalid_argument("advantage batch is empty");
  for (const auto& [key, group] : groups) {
    if (!(group.visits > 0.0) || group.factors.empty()) {
      throw std::invalid_argument("state group " + key.to_string() +
                                  " is empty");
    }
    for (const auto& factor : group.factors) {
      if (factor.entries.empty()) {
        throw std::invalid_argument("state group " + key.to_string() +
                                    " has an empty action factor");
      }
      double mass = 0.0;
      for (const auto& e : factor.entries) {
        if (!std::isfinite(e.advantage)) {
          throw std::domain_error("non-finite advantage at " +
                                  key.to_string());
        }
        if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
          throw std::invalid_argument("invalid action weight at " +
                                      key.to_string());
        }
        mass += e.weight;
      }
      if (!(mass > 0.0)) {
        throw std::invalid_argument("action weights at " + key.to_string() +
                                    " sum to zero");
      }
    }
  }
}

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kMonteCarlo:
      return "mc";
    case EstimatorKind::kGae:
      return "gae";
    case EstimatorKind::kNStep:
      return "nstep";
  }
  return "mc";
}

EstimatorKind parse_estimator(const std::string& name) {
  if (name == "mc") return EstimatorKind::kMonteCarlo;
  if (name == "gae") return EstimatorKind::kGae;
  if (name == "nstep") return EstimatorKind::kNStep;
  throw std::invalid_argument("unknown advantage_estimator '" + name +
                              "' (expected mc, gae or nstep)");
}

double nstep_return(const Trajectory& traj, std::size_t t, int n,
                    const ValueTable& values, const DiscountSpec& disc,
                    const KeyScheme& scheme) {
  if (n < 1) throw std::invalid_argument("n-step return needs n >= 1");
  if (t >= traj.size()) {
    throw std::out_of_range("step index " + std::to_string(t) +
                            " outside trajectory");
  }
  const double lambda = disc.lambda();
  const std::size_t end = std::min(traj.size(), t + static_cast<std::size_t>(n));
  double ret = 0.0;
  double scale = 1.0;
  for (std::size_t k = t; k < end; ++k) {
    ret += scale * traj.steps[k].reward;
    scale *= lambda;
  }
  if (end < traj.size()) {
    ret += scale * values.value(key_of(traj.steps[end].observation, scheme));
  } else if (!traj.complete) {
    if (!traj.final_observation) {
      throw std::invalid_argument(
          "truncated trajectory has no bootstrap observation");
    }
    ret += scale * values.value(key_of(*traj.final_observation, scheme));
  }
  return ret;
}

std::vector<double> mc_step_advantages(const Trajectory& traj,
                                       const ValueTable& values,
                                       const DiscountSpec& disc,
                                       const KeyScheme& scheme) {
  if (!traj.complete) {
    throw std::invalid_argument(
        "Monte-Carlo advantages need a complete trajectory");
  }
  auto adv = all_returns(traj, disc);
  for (std::size_t t = 0; t < adv.size(); ++t) {
    adv[t] -= values.value(key_of(traj.steps[t].observation, scheme));
  }
  return adv;
}

std::vector<double> gae_step_advantages(const Trajectory& traj,
                                        const ValueTable& values,
                                        const DiscountSpec& disc,
                                        double gae_lambda,
                                        const KeyScheme& scheme) {
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw std::invalid_argument("gae_lambda must lie in [0, 1]");
  }
  if (!traj.complete) {
    throw std::invalid_argument("GAE needs a complete trajectory");
  }
  const double lambda = disc.lambda();
  const std::size_t T = traj.size();
  std::vector<double> v(T + 1, 0.0);  // terminal value is 0
  for (std::size_t t = 0; t < T; ++t) {
    v[t] = values.value(key_of(traj.steps[t].observation, scheme));
  }
  std::vector<double> adv(T);
  double running = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const double td = traj.steps[t].reward + lambda * v[t + 1] - v[t];
    running = td + lambda * gae_lambda * running;
    adv[t] = running;
  }
  return adv;
}

std::vector<double> nstep_step_advantages(const Trajectory& traj,
                                          const ValueTable& values,
                                          const DiscountSpec& disc, int n,
                                          const KeyScheme& scheme) {
  std::vector<double> adv(traj.size());
  for (std::size_t t = 0; t < traj.size(); ++t) {
    adv[t] = nstep_return(traj, t, n, values, disc, scheme) -
             values.value(key_of(traj.steps[t].observation, scheme));
  }
  return adv;
}

std::vector<double> step_advantages(const Trajectory& traj,
                                    const ValueTable& values,
                                    const DiscountSpec& disc,
                                    const EstimatorConfig& est,
                                    const KeyScheme& scheme) {
  switch (est.kind) {
    case EstimatorKind::kMonteCarlo:
      return mc_step_advantages(traj, values, disc, scheme);
    case EstimatorKind::kGae:
      return gae_step_advantages(traj, values, disc, est.gae_lambda, scheme);
    case EstimatorKind::kNStep:
      return nstep_step_advantages(traj, values, disc, est.td_n, scheme);
  }
  throw std::logic_error("unhandled estimator");
}

namespace {

AdvantageBatch group_samples(const Trajectory& traj,
                             const std::vector<double>& adv,
                             const KeyScheme& scheme) {
  AdvantageBatch batch;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const auto& step = traj.steps[t];
    auto& group = batch.groups[key_of(step.observation, scheme)];
    if (group.factors.empty()) group.factors.emplace_back();
    group.visits += 1.0;
    group.factors.front().entries.push_back(
        {step.action.prices, adv[t], 1.0});
    ++batch.total_count;
  }
  return batch;
}

}  // namespace

AdvantageBatch mc_advantages(const Trajectory& traj, const ValueTable& values,
                             const DiscountSpec& disc,
                             const KeyScheme& scheme) {
  return group_samples(traj, mc_step_advantages(traj, values, disc, scheme),
                       scheme);
}

AdvantageBatch gae_advantages(const Trajectory& traj, const ValueTable& values,
                              const DiscountSpec& disc, double gae_lambda,
                              const KeyScheme& scheme) {
  return group_samples(
      traj, gae_step_advantages(traj, values, disc, gae_lambda, scheme),
      scheme);
}

double value_loss(const ValueTable& values, std::span<const Trajectory> batch,
                  const DiscountSpec& disc, const KeyScheme& scheme) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& traj : batch) {
    const auto returns = all_returns(traj, disc);
    for (std::size_t t = 0; t < returns.size(); ++t) {
      const double r =
          returns[t] - values.value(key_of(traj.steps[t].observation, scheme));
      sum += r * r;
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

ValueTable value_update(const ValueTable& values,
                        std::span<const Trajectory> batch,
                        const DiscountSpec& disc, const KeyScheme& scheme) {
  std::map<StateKey, double> residual_sum;
  for (const auto& traj : batch) {
    const auto returns = all_returns(traj, disc);
    for (std::size_t t = 0; t < returns.size(); ++t) {
      const auto key = key_of(traj.steps[t].observation, scheme);
      residual_sum[key] += returns[t] - values.value(key);
    }
  }
  ValueTable next = values;
  for (const auto& [key, res] : residual_sum) {
    next.set(key, values.value(key) + 2.0 * values.learning_rate() * res);
  }
  return next;
}

}  // namespace nptrust
