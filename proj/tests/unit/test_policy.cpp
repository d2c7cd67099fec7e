#include <doctest.h>

#include <cmath>
#include <random>

#include "../oracles.hpp"
#include "nptrust/dual.hpp"
#include "nptrust/policy.hpp"

using namespace nptrust;

namespace {

const StateKey kKey{1, std::nullopt};

CategoricalPolicy two_prices(const std::vector<double>& p = {0.5, 0.5}) {
  CategoricalPolicy pi({1.0, 2.0}, 1, CategoricalMode::kFactored);
  pi.set_probabilities(kKey, 0, p);
  return pi;
}

AdvantageBatch batch_for(const CategoricalPolicy& pi,
                         const std::vector<double>& adv) {
  return support_batch(pi, {{kKey, 1.0}},
                       [&](const StateKey&, std::size_t, std::size_t j) {
                         return adv[j];
                       });
}

ParticlePolicy two_particles(double bandwidth = 0.0) {
  ParticleSettings s;
  s.particles_per_state = 2;
  s.bandwidth = bandwidth;
  ParticlePolicy pi(1, 0.0, 10.0, s);
  pi.set_particles(kKey, {{{2.0}, 0.5}, {{7.0}, 0.5}});
  return pi;
}

AdvantageBatch particle_batch_for(const ParticlePolicy& pi,
                                  const std::vector<double>& adv) {
  return particle_batch(pi, {{kKey, 1.0}},
                        [&](const StateKey&, const std::vector<double>& x) {
                          return x[0] < 5.0 ? adv[0] : adv[1];
                        });
}

}  // namespace

TEST_CASE("categorical tilt example") {
  const double beta = 0.7;
  const auto pi = two_prices();
  const auto next =
      tilt_categorical(pi, batch_for(pi, {beta * std::log(2.0), 0.0}), beta);
  const auto q = next.probabilities(kKey, 0);
  CHECK(q[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("constant and shifted advantages") {
  const auto pi = two_prices({0.3, 0.7});
  CHECK(tilt_categorical(pi, batch_for(pi, {4.0, 4.0}), 0.01)
            .probabilities(kKey, 0) == pi.probabilities(kKey, 0));
  const auto a = tilt_categorical(pi, batch_for(pi, {0.2, -0.1}), 0.3);
  const auto b = tilt_categorical(pi, batch_for(pi, {100.2, 99.9}), 0.3);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(std::abs(a.probabilities(kKey, 0)[j] - b.probabilities(kKey, 0)[j]) < 1e-12);
  }
}

TEST_CASE("unvisited keys are unchanged") {
  auto pi = two_prices({0.3, 0.7});
  const StateKey other{2, std::nullopt};
  pi.set_probabilities(other, 0, {0.9, 0.1});
  const auto next = tilt_categorical(pi, batch_for(pi, {1.0, 0.0}), 0.5);
  CHECK(next.probabilities(other, 0) == pi.probabilities(other, 0));
  // Keys never touched stay lazily uniform.
  CHECK(next.probabilities({7, std::nullopt}, 0) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("tilt rejects incomplete or misaligned batches") {
  CategoricalPolicy joint({1.0, 2.0}, 2, CategoricalMode::kJoint);
  AdvantageBatch partial;
  auto& g = partial.groups[kKey];
  g.visits = 1;
  g.factors.push_back({{{{1.0, 1.0}, 0.0, 0.25}, {{2.0, 1.0}, 1.0, 0.25}}});
  CHECK_THROWS_AS(tilt_categorical(joint, partial, 1.0), std::invalid_argument);

  const auto pi = two_prices();
  auto batch = batch_for(pi, {1.0, 0.0});
  std::swap(batch.groups[kKey].factors[0].entries[0].action,
            batch.groups[kKey].factors[0].entries[1].action);
  CHECK_THROWS(tilt_categorical(pi, batch, 1.0));
  CHECK_THROWS(tilt_categorical(pi, batch_for(pi, {std::nan(""), 0.0}), 1.0));
}

TEST_CASE("joint indices enumerate customer 0 fastest") {
  CategoricalPolicy joint({0.0, 1.0, 2.0}, 2, CategoricalMode::kJoint);
  CHECK(joint.support_size() == 9);
  CHECK(joint.factor_action(0, 1) == std::vector<double>{1.0, 0.0});
  CHECK(joint.factor_action(0, 3) == std::vector<double>{0.0, 1.0});
  CHECK_THROWS(CategoricalPolicy(std::vector<double>(25, 0.0), 6,
                                 CategoricalMode::kJoint));
}

TEST_CASE("factored tilt equals joint tilt") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  const std::vector<double> grid = {0.0, 1.0, 2.0};
  CategoricalPolicy fac(grid, 2, CategoricalMode::kFactored);
  CategoricalPolicy joint(grid, 2, CategoricalMode::kJoint);
  std::vector<double> a0(3), a1(3);
  for (auto& x : a0) x = u(rng);
  for (auto& x : a1) x = u(rng);
  const std::map<StateKey, double> visits{{kKey, 1.0}};
  const auto fb = support_batch(fac, visits, [&](const StateKey&, std::size_t f, std::size_t j) {
    return f == 0 ? a0[j] : a1[j];
  });
  const auto jb = support_batch(joint, visits, [&](const StateKey&, std::size_t, std::size_t j) {
    return a0[j % 3] + a1[j / 3];
  });
  TrustRegionSpec spec;
  const double beta = solve_beta(jb, spec).beta_star;
  CHECK(solve_beta(fb, spec).beta_star == doctest::Approx(beta).epsilon(1e-12));
  const auto f = tilt_categorical(fac, fb, beta);
  const auto q = tilt_categorical(joint, jb, beta).probabilities(kKey, 0);
  for (std::size_t j = 0; j < 9; ++j) {
    CHECK(std::abs(f.probabilities(kKey, 0)[j % 3] * f.probabilities(kKey, 1)[j / 3] -
                   q[j]) < 1e-12);
  }
  CHECK(expected_kl(f, fac, visits) ==
        doctest::Approx(expected_kl(tilt_categorical(joint, jb, beta), joint, visits))
            .epsilon(1e-9));
}

TEST_CASE("tilt with the solved beta matches a constrained maximisation") {
  const std::vector<double> p = {0.1, 0.4, 0.3, 0.2}, a = {0.9, -0.3, 0.2, 0.5};
  CategoricalPolicy pi({0.0, 1.0, 2.0, 3.0}, 1, CategoricalMode::kFactored);
  pi.set_probabilities(kKey, 0, p);
  const auto batch = batch_for(pi, a);
  TrustRegionSpec spec;
  const auto sol = solve_beta(batch, spec);
  const auto q = tilt_categorical(pi, batch, sol.beta_star).probabilities(kKey, 0);
  CHECK(oracle::tv(q, oracle::kl_constrained_argmax(p, a, spec.delta)) < 1e-3);
  CHECK(oracle::tv(q, oracle::tilt(p, a, sol.beta_star)) < 1e-12);
}

TEST_CASE("particle tilt example and ordering") {
  const double beta = 2.0;
  const auto pi = two_particles();
  const auto next = reweight_particles(
      pi, particle_batch_for(pi, {beta * std::log(3.0), 0.0}), beta);
  const auto ps = next.particles(kKey);
  CHECK(ps[0].weight == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(ps[1].weight == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(ps[0].prices == std::vector<double>{2.0});

  const auto same = reweight_particles(pi, particle_batch_for(pi, {3.0, 3.0}), 0.1);
  CHECK(same.particles(kKey)[0].weight == doctest::Approx(0.5).epsilon(1e-15));

  const auto after = reweight_particles(next, particle_batch_for(next, {0.5, 0.1}), 1.0);
  const auto w = after.particles(kKey);
  CHECK(w[0].weight / w[1].weight > ps[0].weight / ps[1].weight);
}

TEST_CASE("degenerate particle sets are resampled") {
  ParticleSettings s;
  s.particles_per_state = 8;
  s.bandwidth = 0.3;
  s.resample_threshold = 0.5;
  ParticlePolicy pi(2, 0.0, 12.0, s);
  const auto start = pi.particles(kKey);
  std::vector<double> adv(8, 0.0);
  adv[3] = 5.0;
  const auto batch = particle_batch(pi, {{kKey, 1.0}},
                                    [&](const StateKey&, const std::vector<double>& x) {
                                      for (std::size_t i = 0; i < 8; ++i) {
                                        if (start[i].prices == x) return adv[i];
                                      }
                                      return 0.0;
                                    });
  std::mt19937_64 rng(1);
  const auto tilted = reweight_particles(pi, batch, 0.5);
  CHECK(effective_sample_size(tilted.particles(kKey)) < 4.0);
  const auto next = tilt_particles(pi, batch, 0.5, rng);
  const auto ps = next.particles(kKey);
  REQUIRE(ps.size() == 8);
  double sum = 0;
  int exact_copies = 0;
  for (const auto& p : ps) {
    CHECK(p.weight == doctest::Approx(0.125).epsilon(1e-12));
    sum += p.weight;
    for (double x : p.prices) CHECK((x >= 0.0 && x <= 12.0));
    exact_copies += p.prices == start[3].prices;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(exact_copies == 1);  // the rest were jittered
  CHECK(effective_sample_size(ps) == doctest::Approx(8.0));

  // Healthy sets are left alone.
  auto keep = reweight_particles(pi, particle_batch_for(pi, {0.0, 0.0}), 1.0);
  CHECK(resample_degenerate(keep, {kKey}, rng).empty());
}

TEST_CASE("initial particles are stratified and reproducible") {
  ParticleSettings s;
  s.particles_per_state = 16;
  s.seed = 42;
  ParticlePolicy pi(3, 0.0, 12.0, s);
  const auto a = pi.particles(kKey), b = pi.particles(kKey);
  CHECK(a.size() == 16);
  for (std::size_t n = 0; n < 3; ++n) {
    std::vector<int> strata(16, 0);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(a[i].prices[n] == b[i].prices[n]);
      ++strata[static_cast<std::size_t>(a[i].prices[n] / 12.0 * 16.0)];
    }
    for (int c : strata) CHECK(c == 1);
  }
  CHECK(a[0].prices != pi.particles({2, std::nullopt})[0].prices);
  CHECK_THROWS(pi.set_particles(kKey, {{{1.0, 1.0, 1.0}, 1.0}}));
}

TEST_CASE("sampling") {
  std::mt19937_64 rng(3);
  const auto sure = two_prices({0.0, 1.0});
  for (int i = 0; i < 100; ++i) CHECK(sample_action(sure, kKey, rng).prices[0] == 2.0);

  const auto pi = two_prices({2.0 / 3.0, 1.0 / 3.0});
  int first = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) first += sample_action(pi, kKey, rng).prices[0] == 1.0;
  CHECK(std::abs(first / double(draws) - 2.0 / 3.0) < 0.01);

  auto particles = two_particles(0.0);
  particles.set_particles(kKey, {{{2.0}, 0.25}, {{7.0}, 0.75}});
  int low = 0;
  for (int i = 0; i < draws; ++i) {
    const double x = sample_action(particles, kKey, rng).prices[0];
    CHECK((x == 2.0 || x == 7.0));
    low += x == 2.0;
  }
  CHECK(std::abs(low / double(draws) - 0.25) < 0.01);

  const auto smooth = two_particles(5.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = sample_action(smooth, kKey, rng).prices[0];
    CHECK((x >= 0.0 && x <= 10.0));
  }
}

TEST_CASE("greedy actions") {
  CategoricalPolicy uniform({0.0, 0.5, 1.0, 1.5, 2.0}, 2, CategoricalMode::kFactored);
  CHECK(greedy_action(uniform, kKey).prices == std::vector<double>{1.0, 1.0});
  auto pi = uniform;
  pi.set_probabilities(kKey, 1, {0.1, 0.1, 0.1, 0.1, 0.6});
  CHECK(greedy_action(pi, kKey).prices == std::vector<double>{1.0, 2.0});

  auto particles = two_particles();
  particles.set_particles(kKey, {{{2.0}, 0.25}, {{7.0}, 0.75}});
  CHECK(greedy_action(particles, kKey).prices[0] == doctest::Approx(5.75));
}

TEST_CASE("expected KL") {
  const auto pi = two_prices();
  const std::map<StateKey, double> visits{{kKey, 1.0}};
  CHECK(expected_kl(pi, pi, visits) == 0.0);
  const auto next = two_prices({2.0 / 3.0, 1.0 / 3.0});
  CHECK(expected_kl(next, pi, visits) ==
        doctest::Approx(2.0 / 3.0 * std::log(4.0 / 3.0) + std::log(2.0 / 3.0) / 3.0)
            .epsilon(1e-12));
  CHECK(expected_kl(next, pi, visits) == doctest::Approx(0.05663).epsilon(1e-4));
  CategoricalPolicy bigger({1.0, 2.0, 3.0}, 1, CategoricalMode::kFactored);
  CHECK_THROWS(expected_kl(bigger, pi, visits));

  // Visit weighting.
  auto two_keys = pi;
  const StateKey other{2, std::nullopt};
  auto moved = next;
  moved.set_probabilities(other, 0, {0.5, 0.5});
  const double kl = expected_kl(moved, two_keys, {{kKey, 3.0}, {other, 1.0}});
  CHECK(kl == doctest::Approx(0.75 * expected_kl(next, pi, visits)).epsilon(1e-12));
}

TEST_CASE("expected advantage") {
  CHECK(expected_advantage(two_prices(), batch_for(two_prices(), {1.0, -1.0})) == 0.0);
  const auto pi = two_prices({2.0 / 3.0, 1.0 / 3.0});
  CHECK(expected_advantage(pi, batch_for(pi, {1.0, 0.0})) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  const auto batch = batch_for(pi, {0.3, -0.2});
  const auto next = tilt_categorical(pi, batch, 0.4);
  CHECK(expected_advantage(next, batch) > expected_advantage(pi, batch));
}

TEST_CASE("likelihood ratios average to one under the old policy") {
  const auto pi = two_prices({0.2, 0.8});
  const auto next = tilt_categorical(pi, batch_for(pi, {0.0, 1.0}), 0.3);
  const auto L = likelihood_ratio(next, pi, kKey, 0);
  CHECK(0.2 * L[0] + 0.8 * L[1] == doctest::Approx(1.0).epsilon(1e-12));
  for (double l : L) CHECK(l >= 0.0);
}

TEST_CASE("probability vectors are validated") {
  auto pi = two_prices();
  CHECK_THROWS(pi.set_probabilities(kKey, 0, {0.5, 0.6}));
  CHECK_THROWS(pi.set_probabilities(kKey, 0, {1.5, -0.5}));
  CHECK_THROWS(pi.set_probabilities(kKey, 0, {1.0}));
  CHECK_THROWS(pi.set_probabilities(kKey, 1, {0.5, 0.5}));
}
