#include "nptrust/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace nptrust {

std::string to_string(ActionMode mode) {
  return mode == ActionMode::kDiscrete ? "discrete" : "continuous";
}

ActionMode parse_action_mode(const std::string& name) {
  if (name == "discrete") return ActionMode::kDiscrete;
  if (name == "continuous") return ActionMode::kContinuous;
  throw std::invalid_argument("unknown action_mode '" + name +
                              "' (expected discrete or continuous)");
}

std::string to_string(CategoricalMode mode) {
  return mode == CategoricalMode::kFactored ? "factored" : "joint";
}

CategoricalMode parse_policy_mode(const std::string& name) {
  if (name == "factored") return CategoricalMode::kFactored;
  if (name == "joint") return CategoricalMode::kJoint;
  throw std::invalid_argument("unknown policy_mode '" + name +
                              "' (expected factored or joint)");
}

void TrainConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (episodes_per_iteration < 1) {
    throw std::invalid_argument("episodes_per_iteration must be >= 1");
  }
  trust.validate();
  DiscountSpec{discount};
  if (!(value_lr > 0.0)) throw std::invalid_argument("value_lr must be > 0");
  if (!(estimator.gae_lambda >= 0.0 && estimator.gae_lambda <= 1.0)) {
    throw std::invalid_argument("gae_lambda must lie in [0, 1]");
  }
  if (estimator.td_n < 1) throw std::invalid_argument("td_n must be >= 1");
  key_scheme.validate();
  if (!(qlearning.learning_rate > 0.0 && qlearning.learning_rate <= 1.0)) {
    throw std::invalid_argument("q_lr must lie in (0, 1]");
  }
  for (double e : {qlearning.eps_start, qlearning.eps_end}) {
    if (!(e >= 0.0 && e <= 1.0)) {
      throw std::invalid_argument("epsilon must lie in [0, 1]");
    }
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b) {
  // splitmix64 finalizer over a simple combination of the inputs
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ (b * 0x2545f4914f6cdd1dULL));
}

double sample_mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace {

void check_compatible(const MarketConfig& market, const TrainConfig& cfg) {
  market.validate();
  cfg.validate();
  const bool discrete = cfg.action_mode == ActionMode::kDiscrete;
  if (discrete != market.discrete()) {
    throw std::invalid_argument(
        discrete ? "discrete action mode needs price_grid_step > 0"
                 : "continuous action mode needs price_grid_step = 0");
  }
}

}  // namespace

Policy initial_policy(const MarketConfig& market, const TrainConfig& cfg) {
  const auto n = static_cast<std::size_t>(market.n_customers);
  if (cfg.action_mode == ActionMode::kDiscrete) {
    return CategoricalPolicy(market.price_grid(), n, cfg.policy_mode);
  }
  auto settings = cfg.particles;
  settings.seed = derive_seed(cfg.seed, 0x7061727469636c65ULL, 0);
  return ParticlePolicy(n, market.price_min, market.price_max, settings);
}

Trajectory rollout(MarketEnv& env, const Policy& pi, const KeyScheme& scheme,
                   std::uint64_t env_seed, std::mt19937_64* rng) {
  Trajectory traj;
  std::optional<Observation> obs = env.reset(env_seed);
  while (obs) {
    const auto key = key_of(*obs, scheme);
    PriceAction act =
        rng ? sample_action(pi, key, *rng) : greedy_action(pi, key);
    auto tr = env.step(*obs, act);
    Step step;
    step.observation = std::move(*obs);
    step.action = std::move(act);
    step.reward = tr.outcome.reward;
    step.customer_rewards = std::move(tr.outcome.customer_rewards);
    step.consumption = std::move(tr.outcome.consumption);
    traj.steps.push_back(std::move(step));
    obs = std::move(tr.next);
  }
  traj.complete = true;
  return traj;
}

namespace {

// Support points per customer for one key: grid prices (discrete) or the
// n-th coordinate of each particle (continuous).
std::vector<std::vector<double>> customer_support(const Policy& pi,
                                                  const StateKey& key,
                                                  std::size_t customers) {
  std::vector<std::vector<double>> support(customers);
  if (const auto* cat = std::get_if<CategoricalPolicy>(&pi)) {
    for (auto& s : support) s = cat->grid();
  } else {
    const auto ps = std::get<ParticlePolicy>(pi).particles(key);
    for (std::size_t n = 0; n < customers; ++n) {
      for (const auto& p : ps) support[n].push_back(p.prices[n]);
    }
  }
  return support;
}

struct KeyAccumulator {
  double weight = 0.0;
  std::size_t count = 0;
  // [customer][support point] running sum of per-customer advantage parts
  std::vector<std::vector<double>> sums;
};

}  // namespace

AdvantageBatch counterfactual_batch(const Policy& pi, const MarketEnv& env,
                                    const std::vector<Trajectory>& episodes,
                                    const std::vector<std::vector<double>>& adv,
                                    const TrainConfig& cfg) {
  const auto customers =
      static_cast<std::size_t>(env.config().n_customers);
  const double lambda = cfg.discount;
  std::map<StateKey, KeyAccumulator> acc;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& traj = episodes[e];
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const auto& step = traj.steps[t];
      const auto key = key_of(step.observation, cfg.key_scheme);
      auto& a = acc[key];
      if (a.sums.empty()) {
        const auto support = customer_support(pi, key, customers);
        a.sums.resize(customers);
        for (std::size_t n = 0; n < customers; ++n) {
          a.sums[n].assign(support[n].size(), 0.0);
        }
      }
      a.weight += cfg.rho_weighted_states
                      ? std::pow(lambda, static_cast<double>(t))
                      : 1.0;
      ++a.count;
      const auto support = customer_support(pi, key, customers);
      const double share = adv[e][t] / static_cast<double>(customers);
      for (std::size_t n = 0; n < customers; ++n) {
        const double taken = step.customer_rewards[n];
        for (std::size_t j = 0; j < support[n].size(); ++j) {
          a.sums[n][j] += share +
                          env.customer_reward(step.observation, n,
                                              support[n][j]) -
                          taken;
        }
      }
    }
  }

  std::map<StateKey, double> visits;
  for (const auto& [key, a] : acc) visits[key] = a.weight;
  auto mean_part = [&](const StateKey& key, std::size_t n, std::size_t j) {
    const auto& a = acc.at(key);
    return a.sums[n][j] / static_cast<double>(a.count);
  };

  if (const auto* cat = std::get_if<CategoricalPolicy>(&pi)) {
    const std::size_t g = cat->grid().size();
    if (cat->mode() == CategoricalMode::kFactored) {
      return support_batch(*cat, visits,
                           [&](const StateKey& key, std::size_t f,
                               std::size_t j) { return mean_part(key, f, j); });
    }
    return support_batch(
        *cat, visits, [&](const StateKey& key, std::size_t, std::size_t j) {
          double sum = 0.0;
          for (std::size_t n = 0; n < customers; ++n) {
            sum += mean_part(key, n, j % g);
            j /= g;
          }
          return sum;
        });
  }

  const auto& particles = std::get<ParticlePolicy>(pi);
  std::map<StateKey, std::size_t> cursor;
  return particle_batch(
      particles, visits,
      [&](const StateKey& key, const std::vector<double>&) {
        // Entries are produced in particle order.
        const std::size_t i = cursor[key]++;
        double sum = 0.0;
        for (std::size_t n = 0; n < customers; ++n) sum += mean_part(key, n, i);
        return sum;
      });
}

TrainResult train(const MarketConfig& market, const TrainConfig& cfg) {
  check_compatible(market, cfg);
  const auto start = std::chrono::steady_clock::now();
  const DiscountSpec disc(cfg.discount);
  MarketEnv env(market);

  TrainResult result{initial_policy(market, cfg), {}, ValueTable(cfg.value_lr)};
  std::mt19937_64 resample_rng(derive_seed(cfg.seed, 0x726573616d706c65ULL, 0));

  for (int k = 0; k < cfg.iterations; ++k) {
    try {
      std::vector<Trajectory> episodes;
      std::vector<double> rewards;
      for (int e = 0; e < cfg.episodes_per_iteration; ++e) {
        const auto ke = static_cast<std::uint64_t>(k);
        const auto ee = static_cast<std::uint64_t>(e);
        std::mt19937_64 rng(derive_seed(cfg.seed, ke, 2 * ee + 1));
        episodes.push_back(rollout(env, result.policy, cfg.key_scheme,
                                   derive_seed(cfg.seed, ke, 2 * ee), &rng));
        rewards.push_back(episode_reward(episodes.back()));
        if (!std::isfinite(rewards.back())) {
          throw TrainingError("non-finite episode reward");
        }
      }

      std::vector<std::vector<double>> adv;
      for (const auto& traj : episodes) {
        adv.push_back(step_advantages(traj, result.values, disc, cfg.estimator,
                                      cfg.key_scheme));
      }

      MetricsRecord rec;
      rec.iteration = k;
      rec.mean_reward = sample_mean(rewards);
      rec.std_reward = sample_std(rewards);
      rec.value_loss =
          value_loss(result.values, episodes, disc, cfg.key_scheme);
      result.values =
          value_update(result.values, episodes, disc, cfg.key_scheme);

      const auto batch =
          counterfactual_batch(result.policy, env, episodes, adv, cfg);
      auto trust = cfg.trust;
      trust.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k),
                               0x6475616cULL);
      const auto sol = solve_beta(batch, trust);
      rec.beta_star = sol.beta_star;
      rec.clamped = sol.clamped;

      const auto visits = visit_weights(batch);
      if (auto* cat = std::get_if<CategoricalPolicy>(&result.policy)) {
        auto next = tilt_categorical(*cat, batch, sol.beta_star);
        rec.expected_kl = expected_kl(next, *cat, visits);
        rec.surrogate_before = expected_advantage(*cat, batch);
        rec.surrogate_after = expected_advantage(next, batch);
        result.policy = std::move(next);
      } else {
        auto& old = std::get<ParticlePolicy>(result.policy);
        auto next = reweight_particles(old, batch, sol.beta_star);
        rec.expected_kl = expected_kl(next, old, visits);
        rec.surrogate_before = expected_advantage(old, batch);
        rec.surrogate_after = expected_advantage(next, batch);
        std::vector<StateKey> keys;
        for (const auto& [key, w] : visits) keys.push_back(key);
        resample_degenerate(next, keys, resample_rng);
        result.policy = std::move(next);
      }

      if (cfg.record_timing) {
        rec.seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
      }
      for (double v : {rec.mean_reward, rec.std_reward, rec.beta_star,
                       rec.expected_kl, rec.value_loss}) {
        if (!std::isfinite(v)) throw TrainingError("non-finite metric");
      }
      result.metrics.push_back(rec);
    } catch (const std::exception& ex) {
      throw TrainingError("iteration " + std::to_string(k) + ": " + ex.what());
    }
  }
  return result;
}

QLearningResult train_qlearning(const MarketConfig& market,
                                const TrainConfig& cfg) {
  if (cfg.action_mode != ActionMode::kDiscrete) {
    throw std::invalid_argument("Q-learning needs the discrete action mode");
  }
  check_compatible(market, cfg);
  const auto start = std::chrono::steady_clock::now();
  const auto grid = market.price_grid();
  const std::size_t g = grid.size();
  const auto customers = static_cast<std::size_t>(market.n_customers);
  const double lambda = cfg.discount;
  const double lr = cfg.qlearning.learning_rate;
  MarketEnv env(market);

  QLearningResult result{
      CategoricalPolicy(grid, customers, CategoricalMode::kFactored),
      {},
      std::vector<std::map<StateKey, std::vector<double>>>(customers)};
  auto q_row = [&](std::size_t n, const StateKey& key) -> std::vector<double>& {
    auto& table = result.q[n];
    auto it = table.find(key);
    if (it == table.end()) it = table.emplace(key, std::vector<double>(g, 0.0)).first;
    return it->second;
  };
  auto argmax = [](const std::vector<double>& row) {
    return static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
  };

  const long total = static_cast<long>(cfg.iterations) * cfg.episodes_per_iteration;
  long episode_index = 0;
  for (int k = 0; k < cfg.iterations; ++k) {
    std::vector<double> rewards;
    double td_sq = 0.0;
    std::size_t td_count = 0;
    for (int e = 0; e < cfg.episodes_per_iteration; ++e, ++episode_index) {
      const double frac =
          total > 1 ? static_cast<double>(episode_index) /
                          static_cast<double>(total - 1)
                    : 1.0;
      const double eps = cfg.qlearning.eps_start +
                         (cfg.qlearning.eps_end - cfg.qlearning.eps_start) * frac;
      const auto ke = static_cast<std::uint64_t>(k);
      const auto ee = static_cast<std::uint64_t>(e);
      std::mt19937_64 rng(derive_seed(cfg.seed ^ 0x71UL, ke, 2 * ee + 1));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::uniform_int_distribution<std::size_t> any(0, g - 1);

      std::optional<Observation> obs =
          env.reset(derive_seed(cfg.seed, ke, 2 * ee));
      double episode_total = 0.0;
      while (obs) {
        const auto key = key_of(*obs, cfg.key_scheme);
        PriceAction act;
        std::vector<std::size_t> idx(customers);
        for (std::size_t n = 0; n < customers; ++n) {
          // Only draw the exploration coin when exploring is possible.
          const bool explore = eps > 0.0 && unit(rng) < eps;
          idx[n] = explore ? any(rng) : argmax(q_row(n, key));
          act.prices.push_back(grid[idx[n]]);
        }
        auto tr = env.step(*obs, act);
        episode_total += tr.outcome.reward;
        for (std::size_t n = 0; n < customers; ++n) {
          double target = tr.outcome.customer_rewards[n];
          if (tr.next) {
            const auto& next_row = q_row(n, key_of(*tr.next, cfg.key_scheme));
            target += lambda * *std::max_element(next_row.begin(), next_row.end());
          }
          auto& row = q_row(n, key);
          const double td = target - row[idx[n]];
          row[idx[n]] += lr * td;
          td_sq += td * td;
          ++td_count;
        }
        obs = std::move(tr.next);
      }
      if (!std::isfinite(episode_total)) {
        throw TrainingError("iteration " + std::to_string(k) +
                            ": non-finite episode reward");
      }
      rewards.push_back(episode_total);
    }
    MetricsRecord rec;
    rec.iteration = k;
    rec.mean_reward = sample_mean(rewards);
    rec.std_reward = sample_std(rewards);
    rec.value_loss = td_count ? td_sq / static_cast<double>(td_count) : 0.0;
    if (cfg.record_timing) {
      rec.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
              .count();
    }
    result.metrics.push_back(rec);
  }

  for (std::size_t n = 0; n < customers; ++n) {
    for (const auto& [key, row] : result.q[n]) {
      std::vector<double> probs(g, 0.0);
      probs[argmax(row)] = 1.0;
      result.policy.set_probabilities(key, n, std::move(probs));
    }
  }
  return result;
}

RandomBaseline random_policy_rewards(const MarketConfig& market,
                                     const TrainConfig& cfg, int episodes,
                                     std::uint64_t seed) {
  check_compatible(market, cfg);
  MarketEnv env(market);
  const auto grid = market.price_grid();
  RandomBaseline out;
  for (int e = 0; e < episodes; ++e) {
    const auto ee = static_cast<std::uint64_t>(e);
    std::mt19937_64 rng(derive_seed(seed ^ 0x72UL, 0, 2 * ee + 1));
    std::uniform_int_distribution<std::size_t> any(0, grid.empty() ? 0 : grid.size() - 1);
    std::uniform_real_distribution<double> box(market.price_min, market.price_max);
    std::optional<Observation> obs = env.reset(derive_seed(seed, 0, 2 * ee));
    double total = 0.0;
    while (obs) {
      PriceAction act;
      for (int n = 0; n < market.n_customers; ++n) {
        act.prices.push_back(grid.empty() ? box(rng) : grid[any(rng)]);
      }
      auto tr = env.step(*obs, act);
      total += tr.outcome.reward;
      obs = std::move(tr.next);
    }
    out.rewards.push_back(total);
  }
  out.mean = sample_mean(out.rewards);
  out.std = sample_std(out.rewards);
  return out;
}

EvalSummary evaluate(const Policy& pi, const MarketConfig& market,
                     const KeyScheme& scheme, int episodes,
                     std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  MarketEnv env(market);
  const auto T = static_cast<std::size_t>(market.horizon);
  const auto N = static_cast<std::size_t>(market.n_customers);
  EvalSummary s;
  s.price.assign(T, std::vector<double>(N, 0.0));
  s.load_reduction = s.price;
  s.unit_profit = s.price;
  for (int e = 0; e < episodes; ++e) {
    const auto traj = rollout(env, pi, scheme,
                              derive_seed(seed, 0x6576616cULL,
                                          static_cast<std::uint64_t>(e)),
                              nullptr);
    s.episode_rewards.push_back(episode_reward(traj));
    for (const auto& step : traj.steps) {
      const auto t = static_cast<std::size_t>(step.observation.t - 1);
      for (std::size_t n = 0; n < N; ++n) {
        const double phi = step.action.prices[n];
        s.price[t][n] += phi;
        s.load_reduction[t][n] += step.observation.base_demand[n].total() -
                                  step.consumption[n].total();
        s.unit_profit[t][n] += phi - market.wholesale[t];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(episodes);
  for (auto* table : {&s.price, &s.load_reduction, &s.unit_profit}) {
    for (auto& row : *table) {
      for (double& x : row) x *= inv;
    }
  }
  s.mean_reward = sample_mean(s.episode_rewards);
  return s;
}

double hours_mean(const std::vector<std::vector<double>>& table,
                  const std::vector<int>& hours, bool complement) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < table.size(); ++t) {
    const bool listed = std::find(hours.begin(), hours.end(),
                                  static_cast<int>(t + 1)) != hours.end();
    if (listed == complement) continue;
    for (double x : table[t]) {
      sum += x;
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace nptrust
