#include <doctest.h>

#include <numeric>

#include "../oracles.hpp"
#include "nptrust/market.hpp"

using namespace nptrust;

namespace {

MarketConfig one_hour(double xi) {
  MarketConfig m;
  m.n_customers = 1;
  m.horizon = 1;
  m.wholesale = {4.0};
  m.elasticity = {xi};
  m.crit_demand = {{5.0}};
  m.curt_demand = {{10.0}};
  m.alpha = {0.1};
  m.beta = {0.2};
  m.rho = 0.5;
  m.price_min = 0.0;
  m.price_max = 12.0;
  return m;
}

}  // namespace

TEST_CASE("hand-derived step") {
  MarketEnv env(one_hour(-0.5));
  const auto obs = env.reset(0);
  const auto tr = env.step(obs, {{6.0}});
  const auto& o = tr.outcome;
  CHECK(o.consumption[0].curtailable == doctest::Approx(7.5).epsilon(1e-12));
  CHECK(o.consumption[0].total() == doctest::Approx(12.5).epsilon(1e-12));
  CHECK(o.profit == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(o.dissatisfaction[0] == doctest::Approx(0.8125).epsilon(1e-12));
  CHECK(o.cost == doctest::Approx(75.8125).epsilon(1e-12));
  CHECK(o.reward == doctest::Approx(-25.40625).epsilon(1e-12));
  CHECK(load_reduction(o, obs)[0] == doctest::Approx(2.5).epsilon(1e-12));
  CHECK_FALSE(tr.next.has_value());
}

TEST_CASE("large markups clamp curtailable consumption at zero") {
  MarketEnv env(one_hour(-2.0));
  const auto obs = env.reset(0);
  const auto tr = env.step(obs, {{12.0}});
  CHECK(tr.outcome.consumption[0].curtailable == 0.0);
  CHECK(load_reduction(tr.outcome, obs)[0] == doctest::Approx(10.0));
  const auto hand = oracle::market_hand(5, 10, -2, 4, 12, 0.1, 0.2, 0.5);
  CHECK(tr.outcome.reward == doctest::Approx(hand.reward).epsilon(1e-12));
}

TEST_CASE("default market episode") {
  auto cfg = default_market_config();
  cfg.price_grid_step = 0.0;
  MarketEnv env(cfg);
  auto obs = std::optional<Observation>(env.reset(3));
  CHECK(obs->t == 1);
  CHECK(obs->customers() == 3);
  for (const auto& p : obs->prev_consumption) CHECK(p.total() == 0.0);
  int steps = 0;
  std::vector<LoadPair> last;
  while (obs) {
    if (steps > 0) {
      for (std::size_t n = 0; n < 3; ++n) {
        CHECK(obs->prev_consumption[n].critical == last[n].critical);
        CHECK(obs->prev_consumption[n].curtailable == last[n].curtailable);
      }
    }
    const double w = cfg.wholesale[static_cast<std::size_t>(obs->t - 1)];
    const std::vector<double> prices = {w, w + 1.0, w - 1.0};
    auto tr = env.step(*obs, {prices});
    const auto& o = tr.outcome;
    // Reward decomposition, per customer and overall.
    CHECK(std::accumulate(o.customer_rewards.begin(), o.customer_rewards.end(),
                          0.0) == doctest::Approx(o.reward).epsilon(1e-12));
    CHECK(o.reward == doctest::Approx(cfg.rho * o.profit - (1 - cfg.rho) * o.cost)
                          .epsilon(1e-12));
    for (std::size_t n = 0; n < 3; ++n) {
      CHECK(env.customer_reward(*obs, n, prices[n]) ==
            doctest::Approx(o.customer_rewards[n]).epsilon(1e-12));
    }
    // Neutral price for customer 0.
    CHECK(o.consumption[0].curtailable == doctest::Approx(obs->base_demand[0].curtailable));
    CHECK(o.dissatisfaction[0] == doctest::Approx(0.0));
    last = o.consumption;
    obs = std::move(tr.next);
    ++steps;
  }
  CHECK(steps == 24);
}

TEST_CASE("retail equal to wholesale is neutral") {
  const auto cfg = default_market_config();
  MarketEnv env(cfg);
  auto obs = env.reset(0);
  obs.t = 1;
  auto cont = cfg;
  cont.price_grid_step = 0.0;
  MarketEnv cenv(cont);
  cenv.reset(0);
  const double w = cfg.wholesale[0];
  const auto tr = cenv.step(obs, {{w, w, w}});
  double expect = 0.0;
  for (std::size_t n = 0; n < 3; ++n) {
    expect -= (1 - cfg.rho) * w * obs.base_demand[n].total();
  }
  CHECK(tr.outcome.profit == doctest::Approx(0.0));
  CHECK(tr.outcome.reward == doctest::Approx(expect).epsilon(1e-12));
  for (double lr : load_reduction(tr.outcome, obs)) CHECK(lr == doctest::Approx(0.0));
}

TEST_CASE("raising one price lowers only that customer's consumption") {
  auto cfg = default_market_config();
  cfg.price_grid_step = 0.0;
  MarketEnv env(cfg);
  const auto obs = env.reset(0);
  const auto a = env.step(obs, {{3.0, 3.0, 3.0}}).outcome;
  const auto b = env.step(obs, {{3.5, 3.0, 3.0}}).outcome;
  CHECK(b.consumption[0].curtailable < a.consumption[0].curtailable);
  CHECK(b.consumption[1].curtailable == a.consumption[1].curtailable);
  CHECK(b.consumption[2].curtailable == a.consumption[2].curtailable);
}

TEST_CASE("vanishing elasticity leaves demand untouched") {
  const auto r = customer_response({5, 10}, 12.0, 4.0, -1e-12, 0.1, 0.2, 0.5);
  CHECK(std::abs(r.curtailable_consumption - 10.0) < 1e-6);
}

TEST_CASE("dissatisfaction vanishes exactly without curtailment") {
  const auto r = customer_response({5, 10}, 4.0, 4.0, -0.7, 0.1, 0.2, 0.5);
  CHECK(r.dissatisfaction == 0.0);
  const auto s = customer_response({5, 10}, 5.0, 4.0, -0.7, 0.1, 0.2, 0.5);
  CHECK(s.dissatisfaction > 0.0);
}

TEST_CASE("noise-free resets are identical; noisy ones follow the seed") {
  auto cfg = default_market_config();
  MarketEnv env(cfg);
  const auto a = env.reset(1), b = env.reset(2);
  CHECK(a.base_demand[0].curtailable == b.base_demand[0].curtailable);
  cfg.demand_noise_std = 0.1;
  MarketEnv noisy(cfg);
  const auto c = noisy.reset(1), d = noisy.reset(1), e = noisy.reset(2);
  CHECK(c.base_demand[1].critical == d.base_demand[1].critical);
  CHECK(c.base_demand[1].critical != e.base_demand[1].critical);
}

TEST_CASE("price checks") {
  MarketEnv env(default_market_config());
  const auto obs = env.reset(0);
  CHECK_THROWS_AS(env.step(obs, {{12.5, 1.0, 1.0}}), std::out_of_range);
  CHECK_THROWS_AS(env.step(obs, {{1.25, 1.0, 1.0}}), std::out_of_range);
  CHECK_THROWS(env.step(obs, {{1.0, 1.0}}));
  auto terminal = obs;
  terminal.t = 25;
  CHECK_THROWS(env.step(terminal, {{1.0, 1.0, 1.0}}));
  CHECK(env.config().price_grid().size() == 25);
}

TEST_CASE("config validation names the field") {
  auto cfg = default_market_config();
  cfg.elasticity[3] = 0.2;
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "elasticity");
  }
  cfg = default_market_config();
  cfg.alpha.pop_back();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = default_market_config();
  cfg.price_max = cfg.price_min;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = default_market_config();
  cfg.rho = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
