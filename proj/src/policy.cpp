#include "nptrust/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace nptrust {

namespace {

constexpr double kActionTol = 1e-9;

bool same_action(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > kActionTol) return false;
  }
  return true;
}

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw std::domain_error("tilt needs a finite beta > 0");
  }
}

// p_j exp((A_j - max A) / beta), renormalized; zero-probability actions stay
// at zero and do not take part in the max.
std::vector<double> tilt(const std::vector<double>& probs,
                         const std::vector<double>& adv, double beta) {
  double max_adv = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (!std::isfinite(adv[j])) {
      throw std::domain_error("non-finite advantage in tilt");
    }
    if (probs[j] > 0.0) max_adv = std::max(max_adv, adv[j]);
  }
  std::vector<double> out(probs.size(), 0.0);
  double z = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] <= 0.0) continue;
    out[j] = probs[j] * std::exp((adv[j] - max_adv) / beta);
    z += out[j];
  }
  // The max-advantage action keeps its full mass, so z >= that mass > 0.
  if (!(z > 0.0)) throw std::logic_error("tilt produced zero total mass");
  for (double& p : out) p /= z;
  return out;
}

double kl_divergence(const std::vector<double>& p,
                     const std::vector<double>& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("KL between distributions of different size");
  }
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] <= 0.0) continue;
    if (q[j] <= 0.0) {
      throw std::invalid_argument("KL support mismatch: new policy puts mass "
                                  "where the old one has none");
    }
    kl += p[j] * std::log(p[j] / q[j]);
  }
  return kl;
}

std::vector<double> normalized(std::vector<double> w) {
  const double z = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= z;
  return w;
}

std::vector<double> weights_of(const std::vector<Particle>& ps) {
  std::vector<double> w;
  w.reserve(ps.size());
  for (const auto& p : ps) w.push_back(p.weight);
  return w;
}

double total_visits(const std::map<StateKey, double>& visits) {
  double total = 0.0;
  for (const auto& [k, v] : visits) total += v;
  if (!(total > 0.0)) throw std::invalid_argument("no visited states");
  return total;
}

}  // namespace

// --- CategoricalPolicy ---

CategoricalPolicy::CategoricalPolicy(std::vector<double> grid,
                                     std::size_t customers,
                                     CategoricalMode mode)
    : grid_(std::move(grid)), customers_(customers), mode_(mode) {
  if (grid_.empty()) throw std::invalid_argument("empty price grid");
  if (customers_ == 0) throw std::invalid_argument("no customers");
  if (mode_ == CategoricalMode::kJoint) {
    const double size = std::pow(static_cast<double>(grid_.size()),
                                 static_cast<double>(customers_));
    if (size > 1e7) {
      throw std::invalid_argument(
          "joint categorical support too large; use the factored mode");
    }
  }
}

std::size_t CategoricalPolicy::factor_count() const {
  return mode_ == CategoricalMode::kFactored ? customers_ : 1;
}

std::size_t CategoricalPolicy::support_size() const {
  if (mode_ == CategoricalMode::kFactored) return grid_.size();
  std::size_t size = 1;
  for (std::size_t n = 0; n < customers_; ++n) size *= grid_.size();
  return size;
}

std::vector<double> CategoricalPolicy::factor_action(std::size_t factor,
                                                     std::size_t index) const {
  if (factor >= factor_count() || index >= support_size()) {
    throw std::out_of_range("support index out of range");
  }
  if (mode_ == CategoricalMode::kFactored) return {grid_[index]};
  std::vector<double> prices(customers_);
  for (std::size_t n = 0; n < customers_; ++n) {
    prices[n] = grid_[index % grid_.size()];
    index /= grid_.size();
  }
  return prices;
}

std::vector<double> CategoricalPolicy::probabilities(const StateKey& key,
                                                     std::size_t factor) const {
  if (factor >= factor_count()) throw std::out_of_range("factor out of range");
  auto it = table_.find(key);
  if (it == table_.end()) {
    const auto size = support_size();
    return std::vector<double>(size, 1.0 / static_cast<double>(size));
  }
  return it->second[factor];
}

void CategoricalPolicy::set_probabilities(const StateKey& key,
                                          std::size_t factor,
                                          std::vector<double> probs) {
  if (factor >= factor_count()) throw std::out_of_range("factor out of range");
  if (probs.size() != support_size()) {
    throw std::invalid_argument("probability vector has wrong length");
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("probabilities must be finite and >= 0");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("probabilities sum to " + std::to_string(sum));
  }
  auto it = table_.find(key);
  if (it == table_.end()) {
    std::vector<std::vector<double>> rows;
    for (std::size_t f = 0; f < factor_count(); ++f) {
      rows.push_back(probabilities(key, f));
    }
    it = table_.emplace(key, std::move(rows)).first;
  }
  it->second[factor] = std::move(probs);
}

// --- ParticlePolicy ---

ParticlePolicy::ParticlePolicy(std::size_t customers, double price_min,
                               double price_max, ParticleSettings settings)
    : customers_(customers),
      price_min_(price_min),
      price_max_(price_max),
      settings_(settings) {
  if (customers_ == 0) throw std::invalid_argument("no customers");
  if (!(price_min_ < price_max_)) {
    throw std::invalid_argument("need price_min < price_max");
  }
  if (settings_.particles_per_state == 0) {
    throw std::invalid_argument("particles_per_state must be >= 1");
  }
  if (!(settings_.bandwidth >= 0.0)) {
    throw std::invalid_argument("bandwidth must be >= 0");
  }
  if (!(settings_.resample_threshold >= 0.0 &&
        settings_.resample_threshold <= 1.0)) {
    throw std::invalid_argument("resample_threshold must lie in [0, 1]");
  }
}

std::vector<Particle> ParticlePolicy::initial_particles(
    const StateKey& key) const {
  const std::size_t m = settings_.particles_per_state;
  const auto bin = key.demand_bin.value_or(0);
  std::seed_seq seq{static_cast<std::uint32_t>(settings_.seed),
                    static_cast<std::uint32_t>(settings_.seed >> 32),
                    static_cast<std::uint32_t>(key.hour),
                    static_cast<std::uint32_t>(bin),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(bin) >> 32),
                    static_cast<std::uint32_t>(key.demand_bin.has_value())};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Particle> ps(m);
  for (auto& p : ps) {
    p.prices.resize(customers_);
    p.weight = 1.0 / static_cast<double>(m);
  }
  std::vector<std::size_t> strata(m);
  const double width = price_max_ - price_min_;
  for (std::size_t n = 0; n < customers_; ++n) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    for (std::size_t i = 0; i < m; ++i) {
      const double u = (static_cast<double>(strata[i]) + unit(rng)) /
                       static_cast<double>(m);
      ps[i].prices[n] = std::clamp(price_min_ + u * width, price_min_,
                                   price_max_);
    }
  }
  return ps;
}

std::vector<Particle> ParticlePolicy::particles(const StateKey& key) const {
  auto it = table_.find(key);
  if (it == table_.end()) return initial_particles(key);
  return it->second;
}

void ParticlePolicy::set_particles(const StateKey& key,
                                   std::vector<Particle> particles) {
  if (particles.size() != settings_.particles_per_state) {
    throw std::invalid_argument("particle count must stay " +
                                std::to_string(settings_.particles_per_state));
  }
  double sum = 0.0;
  for (const auto& p : particles) {
    if (p.prices.size() != customers_) {
      throw std::invalid_argument("particle has wrong dimension");
    }
    for (double x : p.prices) {
      if (!(x >= price_min_ && x <= price_max_)) {
        throw std::invalid_argument("particle price outside bounds");
      }
    }
    if (!(p.weight >= 0.0) || !std::isfinite(p.weight)) {
      throw std::invalid_argument("particle weight must be finite and >= 0");
    }
    sum += p.weight;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("particle weights sum to " +
                                std::to_string(sum));
  }
  table_[key] = std::move(particles);
}

// --- batches ---

AdvantageBatch particle_batch(
    const ParticlePolicy& pi, const std::map<StateKey, double>& visits,
    const std::function<double(const StateKey&, const std::vector<double>&)>&
        advantage) {
  AdvantageBatch batch;
  for (const auto& [key, weight] : visits) {
    StateGroup group;
    group.visits = weight;
    ActionFactor factor;
    for (const auto& p : pi.particles(key)) {
      factor.entries.push_back({p.prices, advantage(key, p.prices), p.weight});
    }
    batch.total_count += factor.entries.size();
    group.factors.push_back(std::move(factor));
    batch.groups.emplace(key, std::move(group));
  }
  return batch;
}

std::map<StateKey, double> visit_weights(const AdvantageBatch& batch) {
  std::map<StateKey, double> out;
  for (const auto& [key, g] : batch.groups) out[key] = g.visits;
  return out;
}

// --- tilt ---

namespace {

std::vector<double> factor_advantages(const CategoricalPolicy& pi,
                                      const StateKey& key,
                                      const ActionFactor& factor,
                                      std::size_t f) {
  if (factor.entries.size() != pi.support_size()) {
    throw std::invalid_argument(
        "missing grid coverage at " + key.to_string() + ": " +
        std::to_string(factor.entries.size()) + " of " +
        std::to_string(pi.support_size()) + " actions evaluated");
  }
  std::vector<double> adv(factor.entries.size());
  for (std::size_t j = 0; j < adv.size(); ++j) {
    const auto& e = factor.entries[j];
    if (!same_action(e.action, pi.factor_action(f, j))) {
      throw std::invalid_argument("advantage entries at " + key.to_string() +
                                  " are not aligned with the price grid");
    }
    adv[j] = e.advantage;
  }
  return adv;
}

void check_factor_count(const CategoricalPolicy& pi, const StateKey& key,
                        const StateGroup& group) {
  if (group.factors.size() != pi.factor_count()) {
    throw std::invalid_argument(
        "state " + key.to_string() + " has " +
        std::to_string(group.factors.size()) + " advantage factors, policy "
        "needs " + std::to_string(pi.factor_count()));
  }
}

std::vector<double> particle_advantages(const std::vector<Particle>& ps,
                                        const StateKey& key,
                                        const StateGroup& group) {
  if (group.factors.size() != 1 ||
      group.factors.front().entries.size() != ps.size()) {
    throw std::invalid_argument("advantage entries at " + key.to_string() +
                                " do not match the particle set");
  }
  std::vector<double> adv(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& e = group.factors.front().entries[i];
    if (!same_action(e.action, ps[i].prices)) {
      throw std::invalid_argument("advantage entries at " + key.to_string() +
                                  " are not aligned with the particles");
    }
    adv[i] = e.advantage;
  }
  return adv;
}

}  // namespace

CategoricalPolicy tilt_categorical(const CategoricalPolicy& pi,
                                   const AdvantageBatch& batch,
                                   double beta_star) {
  check_beta(beta_star);
  CategoricalPolicy out = pi;
  for (const auto& [key, group] : batch.groups) {
    check_factor_count(pi, key, group);
    for (std::size_t f = 0; f < pi.factor_count(); ++f) {
      const auto adv = factor_advantages(pi, key, group.factors[f], f);
      out.set_probabilities(key, f,
                            tilt(pi.probabilities(key, f), adv, beta_star));
    }
  }
  return out;
}

ParticlePolicy reweight_particles(const ParticlePolicy& pi,
                                  const AdvantageBatch& batch,
                                  double beta_star) {
  check_beta(beta_star);
  ParticlePolicy out = pi;
  for (const auto& [key, group] : batch.groups) {
    auto ps = pi.particles(key);
    const auto adv = particle_advantages(ps, key, group);
    const auto w = tilt(weights_of(ps), adv, beta_star);
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].weight = w[i];
    out.set_particles(key, std::move(ps));
  }
  return out;
}

double effective_sample_size(const std::vector<Particle>& particles) {
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const auto& p : particles) {
    sum += p.weight;
    sum_sq += p.weight * p.weight;
  }
  return sum_sq > 0.0 ? sum * sum / sum_sq : 0.0;
}

std::vector<StateKey> resample_degenerate(ParticlePolicy& pi,
                                          const std::vector<StateKey>& keys,
                                          std::mt19937_64& rng) {
  std::vector<StateKey> resampled;
  const auto& settings = pi.settings();
  const std::size_t m = settings.particles_per_state;
  const double threshold =
      settings.resample_threshold * static_cast<double>(m);
  std::normal_distribution<double> kernel(0.0, 1.0);
  for (const auto& key : keys) {
    const auto ps = pi.particles(key);
    if (effective_sample_size(ps) >= threshold) continue;

    // Systematic resampling: one uniform offset, m evenly spaced pointers.
    const double spacing = 1.0 / static_cast<double>(m);
    std::uniform_real_distribution<double> offset(0.0, spacing);
    double pointer = offset(rng);
    double cumulative = ps.front().weight;
    std::size_t i = 0;
    std::vector<Particle> next;
    next.reserve(m);
    std::vector<bool> used(m, false);
    for (std::size_t k = 0; k < m; ++k) {
      while (pointer > cumulative && i + 1 < m) {
        ++i;
        cumulative += ps[i].weight;
      }
      Particle p{ps[i].prices, spacing};
      if (used[i] && settings.bandwidth > 0.0) {
        for (double& x : p.prices) {
          x = std::clamp(x + settings.bandwidth * kernel(rng), pi.price_min(),
                         pi.price_max());
        }
      }
      used[i] = true;
      next.push_back(std::move(p));
      pointer += spacing;
    }
    // Equal weights that sum to exactly 1 after rounding.
    double sum = 0.0;
    for (const auto& p : next) sum += p.weight;
    for (auto& p : next) p.weight /= sum;
    pi.set_particles(key, std::move(next));
    resampled.push_back(key);
  }
  return resampled;
}

ParticlePolicy tilt_particles(const ParticlePolicy& pi,
                              const AdvantageBatch& batch, double beta_star,
                              std::mt19937_64& rng) {
  auto out = reweight_particles(pi, batch, beta_star);
  std::vector<StateKey> keys;
  for (const auto& [key, g] : batch.groups) keys.push_back(key);
  resample_degenerate(out, keys, rng);
  return out;
}

// --- sampling ---

PriceAction sample_action(const CategoricalPolicy& pi, const StateKey& key,
                          std::mt19937_64& rng) {
  PriceAction act;
  if (pi.mode() == CategoricalMode::kFactored) {
    act.prices.resize(pi.customers());
    for (std::size_t n = 0; n < pi.customers(); ++n) {
      const auto probs = pi.probabilities(key, n);
      std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
      act.prices[n] = pi.grid()[pick(rng)];
    }
  } else {
    const auto probs = pi.probabilities(key, 0);
    std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
    act.prices = pi.factor_action(0, pick(rng));
  }
  return act;
}

PriceAction sample_action(const ParticlePolicy& pi, const StateKey& key,
                          std::mt19937_64& rng) {
  const auto ps = pi.particles(key);
  const auto w = weights_of(ps);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  PriceAction act{ps[pick(rng)].prices};
  const double bw = pi.settings().bandwidth;
  if (bw > 0.0) {
    std::normal_distribution<double> kernel(0.0, bw);
    for (double& x : act.prices) {
      x = std::clamp(x + kernel(rng), pi.price_min(), pi.price_max());
    }
  }
  return act;
}

PriceAction sample_action(const Policy& pi, const StateKey& key,
                          std::mt19937_64& rng) {
  return std::visit([&](const auto& p) { return sample_action(p, key, rng); },
                    pi);
}

// --- greedy ---

namespace {

double snap_to_grid(const std::vector<double>& grid, double x) {
  auto best = grid.front();
  for (double g : grid) {
    if (std::abs(g - x) < std::abs(best - x)) best = g;
  }
  return best;
}

}  // namespace

PriceAction greedy_action(const CategoricalPolicy& pi, const StateKey& key) {
  PriceAction act;
  act.prices.assign(pi.customers(), 0.0);
  for (std::size_t f = 0; f < pi.factor_count(); ++f) {
    const auto probs = pi.probabilities(key, f);
    const double top = *std::max_element(probs.begin(), probs.end());
    std::vector<double> sum(pi.factor_count() == 1 ? pi.customers() : 1, 0.0);
    std::size_t ties = 0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
      if (probs[j] < top * (1.0 - 1e-12)) continue;
      const auto a = pi.factor_action(f, j);
      for (std::size_t i = 0; i < a.size(); ++i) sum[i] += a[i];
      ++ties;
    }
    for (std::size_t i = 0; i < sum.size(); ++i) {
      const std::size_t n = pi.factor_count() == 1 ? i : f;
      act.prices[n] =
          snap_to_grid(pi.grid(), sum[i] / static_cast<double>(ties));
    }
  }
  return act;
}

PriceAction greedy_action(const ParticlePolicy& pi, const StateKey& key) {
  const auto ps = pi.particles(key);
  PriceAction act;
  act.prices.assign(pi.customers(), 0.0);
  double total = 0.0;
  for (const auto& p : ps) {
    total += p.weight;
    for (std::size_t n = 0; n < act.prices.size(); ++n) {
      act.prices[n] += p.weight * p.prices[n];
    }
  }
  for (double& x : act.prices) {
    x = std::clamp(x / total, pi.price_min(), pi.price_max());
  }
  return act;
}

PriceAction greedy_action(const Policy& pi, const StateKey& key) {
  return std::visit([&](const auto& p) { return greedy_action(p, key); }, pi);
}

// --- diagnostics ---

double expected_kl(const CategoricalPolicy& updated,
                   const CategoricalPolicy& old,
                   const std::map<StateKey, double>& visits) {
  if (updated.factor_count() != old.factor_count() ||
      updated.support_size() != old.support_size()) {
    throw std::invalid_argument("KL support mismatch between policies");
  }
  const double total = total_visits(visits);
  double kl = 0.0;
  for (const auto& [key, v] : visits) {
    double kl_s = 0.0;
    for (std::size_t f = 0; f < old.factor_count(); ++f) {
      kl_s += kl_divergence(updated.probabilities(key, f),
                            old.probabilities(key, f));
    }
    kl += v / total * kl_s;
  }
  return kl;
}

double expected_kl(const ParticlePolicy& updated, const ParticlePolicy& old,
                   const std::map<StateKey, double>& visits) {
  const double total = total_visits(visits);
  double kl = 0.0;
  for (const auto& [key, v] : visits) {
    const auto pn = updated.particles(key);
    const auto po = old.particles(key);
    if (pn.size() != po.size()) {
      throw std::invalid_argument("KL support mismatch at " + key.to_string());
    }
    for (std::size_t i = 0; i < pn.size(); ++i) {
      if (!same_action(pn[i].prices, po[i].prices)) {
        throw std::invalid_argument("KL support mismatch at " +
                                    key.to_string());
      }
    }
    kl += v / total *
          kl_divergence(normalized(weights_of(pn)), normalized(weights_of(po)));
  }
  return kl;
}

double expected_advantage(const CategoricalPolicy& pi,
                          const AdvantageBatch& batch) {
  double total = 0.0;
  double sum = 0.0;
  for (const auto& [key, group] : batch.groups) {
    check_factor_count(pi, key, group);
    double value = 0.0;
    for (std::size_t f = 0; f < pi.factor_count(); ++f) {
      const auto adv = factor_advantages(pi, key, group.factors[f], f);
      const auto probs = pi.probabilities(key, f);
      for (std::size_t j = 0; j < adv.size(); ++j) value += probs[j] * adv[j];
    }
    sum += group.visits * value;
    total += group.visits;
  }
  if (!(total > 0.0)) throw std::invalid_argument("empty advantage batch");
  return sum / total;
}

double expected_advantage(const ParticlePolicy& pi,
                          const AdvantageBatch& batch) {
  double total = 0.0;
  double sum = 0.0;
  for (const auto& [key, group] : batch.groups) {
    const auto ps = pi.particles(key);
    const auto adv = particle_advantages(ps, key, group);
    const auto w = normalized(weights_of(ps));
    double value = 0.0;
    for (std::size_t i = 0; i < adv.size(); ++i) value += w[i] * adv[i];
    sum += group.visits * value;
    total += group.visits;
  }
  if (!(total > 0.0)) throw std::invalid_argument("empty advantage batch");
  return sum / total;
}

std::vector<double> likelihood_ratio(const CategoricalPolicy& updated,
                                     const CategoricalPolicy& old,
                                     const StateKey& key, std::size_t factor) {
  const auto pn = updated.probabilities(key, factor);
  const auto po = old.probabilities(key, factor);
  if (pn.size() != po.size()) {
    throw std::invalid_argument("likelihood ratio support mismatch");
  }
  std::vector<double> ratio(pn.size(), 0.0);
  for (std::size_t j = 0; j < pn.size(); ++j) {
    if (po[j] > 0.0) ratio[j] = pn[j] / po[j];
  }
  return ratio;
}

}  // namespace nptrust
