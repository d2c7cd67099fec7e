#include "nptrust/market.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace nptrust {

namespace {

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace

std::vector<double> MarketConfig::price_grid() const {
  std::vector<double> grid;
  if (!discrete()) return grid;
  // Index-based so the endpoints are hit exactly.
  const auto count = static_cast<long>(
      std::floor((price_max - price_min) / price_grid_step + 1e-9));
  for (long i = 0; i <= count; ++i) {
    grid.push_back(price_min + static_cast<double>(i) * price_grid_step);
  }
  return grid;
}

void MarketConfig::validate() const {
  require(n_customers >= 1, "n_customers", "must be at least 1");
  require(horizon >= 1, "horizon", "must be at least 1");
  const auto T = static_cast<std::size_t>(horizon);
  const auto N = static_cast<std::size_t>(n_customers);

  require(wholesale.size() == T, "wholesale",
          "expected " + std::to_string(T) + " hourly values, got " +
              std::to_string(wholesale.size()));
  require(all_finite(wholesale) &&
              std::all_of(wholesale.begin(), wholesale.end(),
                          [](double p) { return p > 0.0; }),
          "wholesale", "prices must be finite and > 0");

  require(elasticity.size() == T, "elasticity",
          "expected " + std::to_string(T) + " hourly values, got " +
              std::to_string(elasticity.size()));
  require(all_finite(elasticity) &&
              std::all_of(elasticity.begin(), elasticity.end(),
                          [](double x) { return x < 0.0; }),
          "elasticity", "coefficients must be finite and < 0");

  for (const auto* profile : {&crit_demand, &curt_demand}) {
    const char* name = profile == &crit_demand ? "crit_demand" : "curt_demand";
    require(profile->size() == N, name,
            "expected one profile per customer (" + std::to_string(N) +
                "), got " + std::to_string(profile->size()));
    for (const auto& row : *profile) {
      require(row.size() == T, name,
              "each profile needs " + std::to_string(T) + " hourly values");
      require(all_finite(row) && std::all_of(row.begin(), row.end(),
                                             [](double d) { return d >= 0.0; }),
              name, "demands must be finite and >= 0");
    }
  }

  require(alpha.size() == N, "alpha", "expected one value per customer");
  require(all_finite(alpha) && std::all_of(alpha.begin(), alpha.end(),
                                           [](double a) { return a > 0.0; }),
          "alpha", "values must be > 0");
  require(beta.size() == N, "beta", "expected one value per customer");
  require(all_finite(beta), "beta", "values must be finite");

  require(rho >= 0.0 && rho <= 1.0, "rho", "must lie in [0, 1]");
  require(std::isfinite(price_min) && std::isfinite(price_max) &&
              price_min < price_max,
          "price_min", "need finite price_min < price_max");
  require(std::isfinite(price_grid_step) && price_grid_step >= 0.0,
          "price_grid_step", "must be >= 0 (0 selects continuous prices)");
  require(price_grid_step <= price_max - price_min, "price_grid_step",
          "larger than the price range");
  require(std::isfinite(demand_noise_std) && demand_noise_std >= 0.0,
          "demand_noise_std", "must be >= 0");
  for (int h : peak_hours) {
    require(h >= 1 && h <= horizon, "peak_hours",
            "hour " + std::to_string(h) + " outside 1.." +
                std::to_string(horizon));
  }
}

MarketConfig default_market_config() {
  MarketConfig cfg;
  cfg.n_customers = 3;
  cfg.horizon = 24;
  cfg.wholesale = {2.60, 2.40, 2.30, 2.30, 2.50, 2.90, 3.60, 4.30,
                   4.60, 4.40, 4.20, 4.10, 4.00, 4.00, 4.20, 4.80,
                   6.20, 7.00, 7.40, 7.00, 6.40, 4.90, 3.80, 3.00};
  cfg.elasticity = {-1.50, -1.50, -1.50, -1.50, -1.50, -1.45, -1.40, -1.30,
                    -1.25, -1.25, -1.25, -1.25, -1.25, -1.25, -1.25, -1.20,
                    -1.05, -1.00, -0.95, -1.00, -1.05, -1.20, -1.35, -1.45};
  cfg.crit_demand = {
      {1.50, 1.50, 1.52, 1.58, 1.75, 2.04, 2.36, 2.50, 2.36, 2.04, 1.75, 1.59,
       1.54, 1.57, 1.70, 1.99, 2.41, 2.82, 3.00, 2.82, 2.41, 1.99, 1.70, 1.57},
      {2.00, 2.00, 2.02, 2.07, 2.20, 2.43, 2.69, 2.80, 2.69, 2.43, 2.20, 2.07,
       2.04, 2.08, 2.24, 2.58, 3.09, 3.59, 3.80, 3.59, 3.09, 2.58, 2.24, 2.08},
      {1.20, 1.20, 1.23, 1.30, 1.50, 1.85, 2.23, 2.40, 2.23, 1.85, 1.50, 1.30,
       1.24, 1.26, 1.36, 1.59, 1.93, 2.26, 2.40, 2.26, 1.93, 1.59, 1.36, 1.25}};
  cfg.curt_demand = {
      {2.00, 2.01, 2.04, 2.17, 2.50, 3.08, 3.71, 4.00, 3.71, 3.08, 2.50, 2.18,
       2.08, 2.16, 2.47, 3.14, 4.12, 5.09, 5.50, 5.09, 4.12, 3.14, 2.47, 2.15},
      {2.50, 2.51, 2.53, 2.63, 2.87, 3.31, 3.79, 4.00, 3.79, 3.31, 2.88, 2.64,
       2.58, 2.68, 3.04, 3.80, 4.93, 6.03, 6.50, 6.03, 4.93, 3.80, 3.04, 2.68},
      {1.80, 1.81, 1.85, 2.01, 2.42, 3.15, 3.94, 4.30, 3.94, 3.15, 2.42, 2.02,
       1.89, 1.94, 2.21, 2.77, 3.62, 4.45, 4.80, 4.45, 3.62, 2.77, 2.21, 1.93}};
  cfg.alpha = {2.4, 2.0, 2.6};
  cfg.beta = {0.6, 0.5, 0.7};
  cfg.rho = 0.5;
  cfg.price_min = 0.0;
  cfg.price_max = 12.0;
  cfg.price_grid_step = 0.5;
  cfg.demand_noise_std = 0.0;
  cfg.peak_hours = {17, 18, 19, 20, 21};
  return cfg;
}

CustomerResponse customer_response(const LoadPair& demand, double price,
                                   double wholesale, double elasticity,
                                   double alpha, double beta, double rho) {
  CustomerResponse r;
  r.curtailable_consumption = std::max(
      0.0, demand.curtailable *
               (1.0 + elasticity * (price - wholesale) / wholesale));
  const double curtailed = demand.curtailable - r.curtailable_consumption;
  r.dissatisfaction = 0.5 * alpha * curtailed * curtailed + beta * curtailed;
  const double consumption = demand.critical + r.curtailable_consumption;
  r.profit = (price - wholesale) * consumption;
  r.cost = price * consumption + r.dissatisfaction;
  r.reward = rho * r.profit - (1.0 - rho) * r.cost;
  return r;
}

MarketEnv::MarketEnv(MarketConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  grid_ = cfg_.price_grid();
}

Observation MarketEnv::observation_at(int t, std::vector<LoadPair> prev) const {
  Observation obs;
  obs.t = t;
  obs.base_demand = demand_.at(static_cast<std::size_t>(t - 1));
  obs.prev_consumption = std::move(prev);
  return obs;
}

Observation MarketEnv::reset(std::uint64_t seed) {
  const auto T = static_cast<std::size_t>(cfg_.horizon);
  const auto N = static_cast<std::size_t>(cfg_.n_customers);
  demand_.assign(T, std::vector<LoadPair>(N));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(1.0, cfg_.demand_noise_std);
  const bool noisy = cfg_.demand_noise_std > 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      double crit = cfg_.crit_demand[n][t];
      double curt = cfg_.curt_demand[n][t];
      if (noisy) {
        crit = std::max(0.0, crit * noise(rng));
        curt = std::max(0.0, curt * noise(rng));
      }
      demand_[t][n] = {crit, curt};
    }
  }
  return observation_at(1, std::vector<LoadPair>(N));
}

void MarketEnv::check_price(double price) const {
  if (!(price >= cfg_.price_min && price <= cfg_.price_max)) {
    throw std::out_of_range("price " + std::to_string(price) + " outside [" +
                            std::to_string(cfg_.price_min) + ", " +
                            std::to_string(cfg_.price_max) + "]");
  }
  if (cfg_.discrete()) {
    const double idx = (price - cfg_.price_min) / cfg_.price_grid_step;
    if (std::abs(idx - std::round(idx)) > 1e-9) {
      throw std::out_of_range("price " + std::to_string(price) +
                              " is not on the price grid");
    }
  }
}

double MarketEnv::customer_reward(const Observation& obs, std::size_t customer,
                                  double price) const {
  check_price(price);
  const auto t = static_cast<std::size_t>(obs.t - 1);
  return customer_response(obs.base_demand.at(customer), price,
                           cfg_.wholesale.at(t), cfg_.elasticity.at(t),
                           cfg_.alpha[customer], cfg_.beta[customer], cfg_.rho)
      .reward;
}

Transition MarketEnv::step(const Observation& obs,
                           const PriceAction& act) const {
  if (obs.t < 1 || obs.t > cfg_.horizon) {
    throw std::logic_error("cannot step observation at t=" +
                           std::to_string(obs.t) + " (horizon " +
                           std::to_string(cfg_.horizon) + ")");
  }
  const std::size_t N = obs.customers();
  if (act.prices.size() != N) {
    throw std::invalid_argument("expected " + std::to_string(N) +
                                " prices, got " +
                                std::to_string(act.prices.size()));
  }
  for (double p : act.prices) check_price(p);

  const auto t = static_cast<std::size_t>(obs.t - 1);
  Transition tr;
  auto& out = tr.outcome;
  out.consumption.resize(N);
  out.dissatisfaction.resize(N);
  out.customer_rewards.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    const auto r = customer_response(obs.base_demand[n], act.prices[n],
                                     cfg_.wholesale[t], cfg_.elasticity[t],
                                     cfg_.alpha[n], cfg_.beta[n], cfg_.rho);
    out.consumption[n] = {obs.base_demand[n].critical,
                          r.curtailable_consumption};
    out.dissatisfaction[n] = r.dissatisfaction;
    out.profit += r.profit;
    out.cost += r.cost;
    out.customer_rewards[n] = r.reward;
  }
  out.reward = cfg_.rho * out.profit - (1.0 - cfg_.rho) * out.cost;

  if (obs.t < cfg_.horizon) {
    tr.next = observation_at(obs.t + 1, out.consumption);
  }
  return tr;
}

std::vector<double> load_reduction(const StepOutcome& outcome,
                                   const Observation& obs) {
  std::vector<double> out(outcome.consumption.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = obs.base_demand[n].total() - outcome.consumption[n].total();
  }
  return out;
}

}  // namespace nptrust
