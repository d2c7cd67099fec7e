// Nonparametric policies and the closed-form trust-region update
//
//   pi'(a|s) = pi(a|s) exp(A(s,a) / beta*) / E_{a~pi}[exp(A(s,a) / beta*)].
//
// Discrete prices use a categorical table per state, either over joint price
// vectors or factored into one distribution per customer. The reward is a sum
// of per-customer terms, so the joint advantage is a sum of per-customer
// components, exp(sum A_n / beta) factorizes and tilting each customer's
// distribution with the shared beta* reproduces the joint update exactly.
//
// Continuous prices use a weighted particle set per state. Actions are drawn
// by picking a particle by weight and adding Gaussian kernel noise.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <variant>
#include <vector>

#include "nptrust/advantage.hpp"
#include "nptrust/mdp.hpp"
#include "nptrust/state_key.hpp"

namespace nptrust {

enum class CategoricalMode { kFactored, kJoint };

class CategoricalPolicy {
 public:
  CategoricalPolicy(std::vector<double> grid, std::size_t customers,
                    CategoricalMode mode);

  const std::vector<double>& grid() const { return grid_; }
  std::size_t customers() const { return customers_; }
  CategoricalMode mode() const { return mode_; }

  /// Independent distributions per state: one per customer when factored,
  /// a single joint one otherwise.
  std::size_t factor_count() const;
  /// Number of actions in each factor's support.
  std::size_t support_size() const;

  /// Price vector of support index `index` in `factor`. Factored supports
  /// hold single prices; joint indices enumerate customer 0 fastest.
  std::vector<double> factor_action(std::size_t factor,
                                    std::size_t index) const;

  /// Stored distribution, or uniform for a state never updated.
  std::vector<double> probabilities(const StateKey& key,
                                    std::size_t factor) const;
  void set_probabilities(const StateKey& key, std::size_t factor,
                         std::vector<double> probs);

  const std::map<StateKey, std::vector<std::vector<double>>>& table() const {
    return table_;
  }

 private:
  std::vector<double> grid_;
  std::size_t customers_;
  CategoricalMode mode_;
  std::map<StateKey, std::vector<std::vector<double>>> table_;
};

struct Particle {
  std::vector<double> prices;
  double weight = 0.0;
};

struct ParticleSettings {
  std::size_t particles_per_state = 64;
  double bandwidth = 0.5;  // kernel std, $/kWh
  double resample_threshold = 0.5;
  std::uint64_t seed = 0;  // drives the stratified initial placement
};

class ParticlePolicy {
 public:
  ParticlePolicy(std::size_t customers, double price_min, double price_max,
                 ParticleSettings settings);

  std::size_t customers() const { return customers_; }
  double price_min() const { return price_min_; }
  double price_max() const { return price_max_; }
  const ParticleSettings& settings() const { return settings_; }

  /// Stored particles, or the initial placement for a state never updated.
  std::vector<Particle> particles(const StateKey& key) const;
  void set_particles(const StateKey& key, std::vector<Particle> particles);

  /// Equal-weight Latin-hypercube placement over the price box, seeded by
  /// the policy seed and the key.
  std::vector<Particle> initial_particles(const StateKey& key) const;

  const std::map<StateKey, std::vector<Particle>>& table() const {
    return table_;
  }

 private:
  std::size_t customers_;
  double price_min_;
  double price_max_;
  ParticleSettings settings_;
  std::map<StateKey, std::vector<Particle>> table_;
};

using Policy = std::variant<CategoricalPolicy, ParticlePolicy>;

/// Full-support advantage batch layout expected by the tilt operators.
/// `advantage(key, factor, index)` is evaluated for every support point of
/// every visited key; `visits` gives each key's weight.
template <typename AdvantageFn>
AdvantageBatch support_batch(const CategoricalPolicy& pi,
                             const std::map<StateKey, double>& visits,
                             AdvantageFn&& advantage);

AdvantageBatch particle_batch(
    const ParticlePolicy& pi, const std::map<StateKey, double>& visits,
    const std::function<double(const StateKey&, const std::vector<double>&)>&
        advantage);

/// Exponential tilt of every visited key; unvisited keys are unchanged.
CategoricalPolicy tilt_categorical(const CategoricalPolicy& pi,
                                   const AdvantageBatch& batch,
                                   double beta_star);

/// Tilt of the particle weights only.
ParticlePolicy reweight_particles(const ParticlePolicy& pi,
                                  const AdvantageBatch& batch,
                                  double beta_star);

/// Systematic resampling of the listed keys whose effective sample size is
/// below resample_threshold * count. Surplus copies of a particle are moved
/// by one kernel draw so the set keeps spreading. Returns the keys that were
/// resampled.
std::vector<StateKey> resample_degenerate(ParticlePolicy& pi,
                                          const std::vector<StateKey>& keys,
                                          std::mt19937_64& rng);

/// reweight_particles followed by resample_degenerate on the batch keys.
ParticlePolicy tilt_particles(const ParticlePolicy& pi,
                              const AdvantageBatch& batch, double beta_star,
                              std::mt19937_64& rng);

double effective_sample_size(const std::vector<Particle>& particles);

PriceAction sample_action(const CategoricalPolicy& pi, const StateKey& key,
                          std::mt19937_64& rng);
PriceAction sample_action(const ParticlePolicy& pi, const StateKey& key,
                          std::mt19937_64& rng);
PriceAction sample_action(const Policy& pi, const StateKey& key,
                          std::mt19937_64& rng);

/// Deterministic action for evaluation. Categorical: the most likely price;
/// exact ties resolve to the grid point nearest the tied prices' centroid.
/// Particles: the weighted mean price, clipped to the bounds.
PriceAction greedy_action(const CategoricalPolicy& pi, const StateKey& key);
PriceAction greedy_action(const ParticlePolicy& pi, const StateKey& key);
PriceAction greedy_action(const Policy& pi, const StateKey& key);

/// Visit-weighted mean over keys of KL(new(.|s) || old(.|s)).
double expected_kl(const CategoricalPolicy& updated,
                   const CategoricalPolicy& old,
                   const std::map<StateKey, double>& visits);
double expected_kl(const ParticlePolicy& updated, const ParticlePolicy& old,
                   const std::map<StateKey, double>& visits);

/// Visit-weighted mean over the batch keys of E_{a~pi}[A(s,a)].
double expected_advantage(const CategoricalPolicy& pi,
                          const AdvantageBatch& batch);
double expected_advantage(const ParticlePolicy& pi,
                          const AdvantageBatch& batch);

/// pi'(a|s) / pi(a|s) over the support of one factor.
std::vector<double> likelihood_ratio(const CategoricalPolicy& updated,
                                     const CategoricalPolicy& old,
                                     const StateKey& key, std::size_t factor);

/// Per-key visit weights of a batch.
std::map<StateKey, double> visit_weights(const AdvantageBatch& batch);

// --- template implementation ---

template <typename AdvantageFn>
AdvantageBatch support_batch(const CategoricalPolicy& pi,
                             const std::map<StateKey, double>& visits,
                             AdvantageFn&& advantage) {
  AdvantageBatch batch;
  for (const auto& [key, weight] : visits) {
    StateGroup group;
    group.visits = weight;
    for (std::size_t f = 0; f < pi.factor_count(); ++f) {
      const auto probs = pi.probabilities(key, f);
      ActionFactor factor;
      factor.entries.reserve(probs.size());
      for (std::size_t j = 0; j < probs.size(); ++j) {
        factor.entries.push_back(
            {pi.factor_action(f, j), advantage(key, f, j), probs[j]});
      }
      group.factors.push_back(std::move(factor));
      batch.total_count += probs.size();
    }
    batch.groups.emplace(key, std::move(group));
  }
  return batch;
}

}  // namespace nptrust
