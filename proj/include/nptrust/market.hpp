// Demand-response retail pricing market.
//
// Each customer splits its hourly demand into a critical part that is always
// served and a curtailable part that follows a linear price elasticity around
// the wholesale price. The service provider's profit and the customers' cost
// (bill plus a quadratic dissatisfaction for curtailed load) are blended by a
// weight rho into the step reward. Every term is a sum over customers whose
// n-th summand depends only on the n-th price, so rewards are reported per
// customer as well.

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nptrust/mdp.hpp"

namespace nptrust {

/// Raised by MarketConfig::validate; `field()` names the offending setting.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct MarketConfig {
  int n_customers = 3;
  int horizon = 24;
  std::vector<double> wholesale;   // pi_t, $/kWh, length horizon
  std::vector<double> elasticity;  // xi_t < 0, length horizon
  // [customer][hour] in kWh
  std::vector<std::vector<double>> crit_demand;
  std::vector<std::vector<double>> curt_demand;
  std::vector<double> alpha;  // dissatisfaction curvature, $/kWh^2
  std::vector<double> beta;   // dissatisfaction slope, $/kWh
  double rho = 0.5;
  double price_min = 0.0;
  double price_max = 12.0;
  double price_grid_step = 0.0;  // > 0 selects discrete prices
  double demand_noise_std = 0.0;
  std::vector<int> peak_hours;  // 1-based, used by evaluation summaries

  bool discrete() const { return price_grid_step > 0.0; }

  /// Admissible prices in discrete mode; empty for continuous mode.
  std::vector<double> price_grid() const;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Three-customer day with morning and evening demand humps, wholesale price
/// peaking over hours 17-21 and weaker elasticity at the peak.
MarketConfig default_market_config();

struct StepOutcome {
  std::vector<LoadPair> consumption;
  double profit = 0.0;
  double cost = 0.0;
  std::vector<double> dissatisfaction;
  double reward = 0.0;
  std::vector<double> customer_rewards;
};

struct CustomerResponse {
  double curtailable_consumption = 0.0;
  double dissatisfaction = 0.0;
  double profit = 0.0;  // provider margin on this customer
  double cost = 0.0;    // bill plus dissatisfaction
  double reward = 0.0;  // rho * profit - (1 - rho) * cost
};

/// One customer's reaction to `price` in an hour with the given demand.
/// Curtailable consumption is clamped at zero.
CustomerResponse customer_response(const LoadPair& demand, double price,
                                   double wholesale, double elasticity,
                                   double alpha, double beta, double rho);

struct Transition {
  std::optional<Observation> next;  // empty once t == horizon
  StepOutcome outcome;
};

/// One simulated day. `reset` draws the episode's demand realization (noise
/// applies only when demand_noise_std > 0); `step` is then a pure function of
/// the observation and the prices.
class MarketEnv {
 public:
  explicit MarketEnv(MarketConfig cfg);

  Observation reset(std::uint64_t seed);

  Transition step(const Observation& obs, const PriceAction& act) const;

  /// Reward attributed to `customer` had it been charged `price` in the
  /// hour described by `obs`. Used for counterfactual evaluation.
  double customer_reward(const Observation& obs, std::size_t customer,
                         double price) const;

  void check_price(double price) const;

  const MarketConfig& config() const { return cfg_; }

 private:
  Observation observation_at(int t, std::vector<LoadPair> prev) const;

  MarketConfig cfg_;
  std::vector<double> grid_;
  // Realized demand for the current episode, [hour-1][customer].
  std::vector<std::vector<LoadPair>> demand_;
};

/// Per-customer curtailed load for the realized hour, in kWh.
std::vector<double> load_reduction(const StepOutcome& outcome,
                                   const Observation& obs);

}  // namespace nptrust
