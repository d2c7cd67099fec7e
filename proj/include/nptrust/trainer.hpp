// On-policy actor-critic loop: collect episodes under pi_k, estimate returns
// and advantages, take a value step, solve the dual for beta*, tilt pi_k.
// Tabular Q-learning and a uniformly random policy serve as comparators.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "nptrust/advantage.hpp"
#include "nptrust/dual.hpp"
#include "nptrust/market.hpp"
#include "nptrust/policy.hpp"
#include "nptrust/state_key.hpp"

namespace nptrust {

enum class ActionMode { kDiscrete, kContinuous };

std::string to_string(ActionMode mode);
ActionMode parse_action_mode(const std::string& name);
std::string to_string(CategoricalMode mode);
CategoricalMode parse_policy_mode(const std::string& name);

struct QLearningConfig {
  double learning_rate = 0.1;
  double eps_start = 1.0;
  double eps_end = 0.05;
};

struct TrainConfig {
  int iterations = 200;
  int episodes_per_iteration = 8;
  std::uint64_t seed = 1;
  TrustRegionSpec trust;
  double discount = 0.99;
  EstimatorConfig estimator;
  double value_lr = 0.05;
  ActionMode action_mode = ActionMode::kDiscrete;
  CategoricalMode policy_mode = CategoricalMode::kFactored;
  ParticleSettings particles;
  KeyScheme key_scheme;
  // Weight state visits by lambda^(t-1) instead of uniformly.
  bool rho_weighted_states = false;
  QLearningConfig qlearning;
  // Wall-clock column in the metrics; off makes runs byte-reproducible.
  bool record_timing = true;

  void validate() const;
};

struct MetricsRecord {
  int iteration = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double beta_star = 0.0;
  double expected_kl = 0.0;
  double value_loss = 0.0;
  double seconds = 0.0;
  // Diagnostics kept out of the CSV.
  bool clamped = false;
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Policy policy;
  std::vector<MetricsRecord> metrics;
  ValueTable values;
};

/// Uniform categorical (discrete) or stratified particle (continuous) policy.
Policy initial_policy(const MarketConfig& market, const TrainConfig& cfg);

/// Runs one episode. Actions are sampled from `pi` with `rng`, or taken
/// greedily when `rng` is null.
Trajectory rollout(MarketEnv& env, const Policy& pi, const KeyScheme& scheme,
                   std::uint64_t env_seed, std::mt19937_64* rng);

/// Full-support advantages for one iteration. The advantage estimate of the
/// sampled joint action is split evenly across customers, and every other
/// price differs from the sampled one by its immediate per-customer reward
/// difference (transitions do not depend on prices). Entries are averaged
/// over the visits of each key.
AdvantageBatch counterfactual_batch(const Policy& pi, const MarketEnv& env,
                                    const std::vector<Trajectory>& episodes,
                                    const std::vector<std::vector<double>>& adv,
                                    const TrainConfig& cfg);

TrainResult train(const MarketConfig& market, const TrainConfig& cfg);

struct QLearningResult {
  CategoricalPolicy policy;  // greedy, one-hot per visited key
  std::vector<MetricsRecord> metrics;
  // [customer] -> key -> Q over the price grid
  std::vector<std::map<StateKey, std::vector<double>>> q;
};

/// Per-customer tabular Q-learning over (key, grid price) with a linearly
/// decaying epsilon-greedy behaviour policy; greedy ties go to the lowest
/// price index. Uses the same number of episodes as train().
QLearningResult train_qlearning(const MarketConfig& market,
                                const TrainConfig& cfg);

struct RandomBaseline {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> rewards;
};

/// Episode rewards of uniformly random prices (grid or continuous box).
RandomBaseline random_policy_rewards(const MarketConfig& market,
                                     const TrainConfig& cfg, int episodes,
                                     std::uint64_t seed);

struct EvalSummary {
  double mean_reward = 0.0;
  std::vector<double> episode_rewards;
  // [hour-1][customer]
  std::vector<std::vector<double>> price;
  std::vector<std::vector<double>> load_reduction;
  std::vector<std::vector<double>> unit_profit;
};

/// Greedy rollouts: argmax prices for categorical policies, weighted mean
/// prices for particle policies.
EvalSummary evaluate(const Policy& pi, const MarketConfig& market,
                     const KeyScheme& scheme, int episodes,
                     std::uint64_t seed);

/// Mean of table[h-1][*] over the given hours (or over all other hours when
/// `complement` is set).
double hours_mean(const std::vector<std::vector<double>>& table,
                  const std::vector<int>& hours, bool complement);

/// Seed derived from a base seed and two stream indices.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b);

double sample_mean(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);

}  // namespace nptrust
