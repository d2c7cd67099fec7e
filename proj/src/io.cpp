#include "nptrust/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace nptrust {

namespace fs = std::filesystem;

json default_settings() {
  const MarketConfig m = default_market_config();
  const TrainConfig t;
  return json{
      // market
      {"n_customers", m.n_customers},
      {"horizon", m.horizon},
      {"wholesale", m.wholesale},
      {"elasticity", m.elasticity},
      {"crit_demand", m.crit_demand},
      {"curt_demand", m.curt_demand},
      {"alpha", m.alpha},
      {"beta", m.beta},
      {"rho", m.rho},
      {"price_min", m.price_min},
      {"price_max", m.price_max},
      {"price_grid_step", m.price_grid_step},
      {"demand_noise_std", m.demand_noise_std},
      {"peak_hours", m.peak_hours},
      // training loop
      {"iterations", t.iterations},
      {"episodes_per_iteration", t.episodes_per_iteration},
      {"seed", t.seed},
      {"discount", t.discount},
      {"action_mode", to_string(t.action_mode)},
      {"policy_mode", to_string(t.policy_mode)},
      {"record_timing", t.record_timing},
      {"baselines", false},
      {"eval_episodes", 10},
      // dual
      {"delta", t.trust.delta},
      {"beta_min", t.trust.beta_min},
      {"basin_hops", t.trust.hops},
      {"local_tol", t.trust.local_tol},
      {"beta_init", t.trust.beta_init},
      {"hop_step", t.trust.hop_step},
      {"hop_temperature", t.trust.temperature},
      {"max_local_iterations", t.trust.max_local_iterations},
      {"rho_weighted_states", t.rho_weighted_states},
      // estimators
      {"advantage_estimator", to_string(t.estimator.kind)},
      {"gae_lambda", t.estimator.gae_lambda},
      {"td_n", t.estimator.td_n},
      {"value_lr", t.value_lr},
      // state keys
      {"key_scheme", to_string(t.key_scheme.mode)},
      {"bin_width", t.key_scheme.bin_width},
      // particles
      {"particles_per_state", t.particles.particles_per_state},
      {"bandwidth", t.particles.bandwidth},
      {"resample_threshold", t.particles.resample_threshold},
      // Q-learning comparator
      {"q_lr", t.qlearning.learning_rate},
      {"eps_start", t.qlearning.eps_start},
      {"eps_end", t.qlearning.eps_end},
  };
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    json doc = json::parse(in);
    if (!doc.is_object()) {
      throw IoError(path.string() + ": expected a JSON object");
    }
    return doc;
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

void apply_value(json& settings, const std::string& key,
                 const std::string& text) {
  if (!settings.contains(key)) throw ConfigError(key, "unknown setting");
  settings[key] = parse_value(text);
}

void apply_override(json& settings, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "expected KEY=VALUE");
  }
  apply_value(settings, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void apply_environment(json& settings) {
  for (auto& [key, value] : settings.items()) {
    std::string name = kEnvPrefix;
    for (char c : key) {
      name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    if (const char* v = std::getenv(name.c_str())) value = parse_value(v);
  }
}

void merge_settings(json& settings, const json& file) {
  for (const auto& [key, value] : file.items()) {
    if (!settings.contains(key)) throw ConfigError(key, "unknown setting");
    settings[key] = value;
  }
}

namespace {

template <typename T>
T get(const json& s, const std::string& key) {
  try {
    return s.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key, "has the wrong type (" + s.at(key).dump() + ")");
  }
}

std::string get_name(const json& s, const std::string& key) {
  return get<std::string>(s, key);
}

template <typename T>
std::vector<T> cycle(std::vector<T> rows, std::size_t n,
                     const std::string& key) {
  if (rows.empty()) throw ConfigError(key, "must not be empty");
  std::vector<T> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(rows[i % rows.size()]);
  return out;
}

// Wraps parse errors of enum-valued settings so the field is named.
template <typename Fn>
auto parse_named(const json& s, const std::string& key, Fn&& fn) {
  const auto name = get_name(s, key);
  try {
    return fn(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

Settings resolve_settings(const json& input) {
  Settings out;
  json s = input;
  const auto action_mode = parse_named(s, "action_mode", parse_action_mode);
  if (action_mode == ActionMode::kContinuous) s["price_grid_step"] = 0.0;

  const int n = get<int>(s, "n_customers");
  if (n < 1) throw ConfigError("n_customers", "must be >= 1");
  const auto nn = static_cast<std::size_t>(n);
  s["crit_demand"] = cycle(
      get<std::vector<std::vector<double>>>(s, "crit_demand"), nn,
      "crit_demand");
  s["curt_demand"] = cycle(
      get<std::vector<std::vector<double>>>(s, "curt_demand"), nn,
      "curt_demand");
  s["alpha"] = cycle(get<std::vector<double>>(s, "alpha"), nn, "alpha");
  s["beta"] = cycle(get<std::vector<double>>(s, "beta"), nn, "beta");

  MarketConfig& m = out.market;
  m.n_customers = n;
  m.horizon = get<int>(s, "horizon");
  m.wholesale = get<std::vector<double>>(s, "wholesale");
  m.elasticity = get<std::vector<double>>(s, "elasticity");
  m.crit_demand = get<std::vector<std::vector<double>>>(s, "crit_demand");
  m.curt_demand = get<std::vector<std::vector<double>>>(s, "curt_demand");
  m.alpha = get<std::vector<double>>(s, "alpha");
  m.beta = get<std::vector<double>>(s, "beta");
  m.rho = get<double>(s, "rho");
  m.price_min = get<double>(s, "price_min");
  m.price_max = get<double>(s, "price_max");
  m.price_grid_step = get<double>(s, "price_grid_step");
  m.demand_noise_std = get<double>(s, "demand_noise_std");
  m.peak_hours = get<std::vector<int>>(s, "peak_hours");
  m.validate();

  TrainConfig& t = out.train;
  t.iterations = get<int>(s, "iterations");
  t.episodes_per_iteration = get<int>(s, "episodes_per_iteration");
  t.seed = get<std::uint64_t>(s, "seed");
  t.discount = get<double>(s, "discount");
  t.action_mode = action_mode;
  t.policy_mode = parse_named(s, "policy_mode", parse_policy_mode);
  t.record_timing = get<bool>(s, "record_timing");
  t.trust.delta = get<double>(s, "delta");
  t.trust.beta_min = get<double>(s, "beta_min");
  t.trust.hops = get<int>(s, "basin_hops");
  t.trust.local_tol = get<double>(s, "local_tol");
  t.trust.beta_init = get<double>(s, "beta_init");
  t.trust.hop_step = get<double>(s, "hop_step");
  t.trust.temperature = get<double>(s, "hop_temperature");
  t.trust.max_local_iterations = get<int>(s, "max_local_iterations");
  t.rho_weighted_states = get<bool>(s, "rho_weighted_states");
  t.estimator.kind = parse_named(s, "advantage_estimator", parse_estimator);
  t.estimator.gae_lambda = get<double>(s, "gae_lambda");
  t.estimator.td_n = get<int>(s, "td_n");
  t.value_lr = get<double>(s, "value_lr");
  t.key_scheme.mode = parse_named(s, "key_scheme", parse_key_mode);
  t.key_scheme.bin_width = get<double>(s, "bin_width");
  const int particles = get<int>(s, "particles_per_state");
  if (particles < 1) throw ConfigError("particles_per_state", "must be >= 1");
  t.particles.particles_per_state = static_cast<std::size_t>(particles);
  t.particles.bandwidth = get<double>(s, "bandwidth");
  t.particles.resample_threshold = get<double>(s, "resample_threshold");
  t.qlearning.learning_rate = get<double>(s, "q_lr");
  t.qlearning.eps_start = get<double>(s, "eps_start");
  t.qlearning.eps_end = get<double>(s, "eps_end");
  try {
    t.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError("training", e.what());
  }
  if (!(t.particles.bandwidth >= 0.0)) {
    throw ConfigError("bandwidth", "must be >= 0");
  }
  if (!(t.particles.resample_threshold >= 0.0 &&
        t.particles.resample_threshold <= 1.0)) {
    throw ConfigError("resample_threshold", "must lie in [0, 1]");
  }
  if (t.action_mode == ActionMode::kDiscrete && !m.discrete()) {
    throw ConfigError("price_grid_step", "discrete mode needs a step > 0");
  }

  out.baselines = get<bool>(s, "baselines");
  out.eval_episodes = get<int>(s, "eval_episodes");
  if (out.eval_episodes < 1) throw ConfigError("eval_episodes", "must be >= 1");
  out.resolved = std::move(s);
  return out;
}

// --- policy dump ---

json policy_to_json(const Policy& pi) {
  json doc;
  if (const auto* cat = std::get_if<CategoricalPolicy>(&pi)) {
    doc["kind"] = "categorical";
    doc["mode"] = to_string(cat->mode());
    doc["customers"] = cat->customers();
    doc["grid"] = cat->grid();
    json states = json::object();
    for (const auto& [key, factors] : cat->table()) {
      states[key.to_string()] = factors;
    }
    doc["states"] = std::move(states);
    return doc;
  }
  const auto& pp = std::get<ParticlePolicy>(pi);
  doc["kind"] = "particles";
  doc["customers"] = pp.customers();
  doc["price_min"] = pp.price_min();
  doc["price_max"] = pp.price_max();
  doc["particles_per_state"] = pp.settings().particles_per_state;
  doc["bandwidth"] = pp.settings().bandwidth;
  doc["resample_threshold"] = pp.settings().resample_threshold;
  doc["seed"] = pp.settings().seed;
  json states = json::object();
  for (const auto& [key, particles] : pp.table()) {
    json list = json::array();
    for (const auto& p : particles) {
      list.push_back({{"prices", p.prices}, {"weight", p.weight}});
    }
    states[key.to_string()] = std::move(list);
  }
  doc["states"] = std::move(states);
  return doc;
}

Policy policy_from_json(const json& doc) {
  try {
    const auto kind = doc.at("kind").get<std::string>();
    const auto customers = doc.at("customers").get<std::size_t>();
    if (kind == "categorical") {
      CategoricalPolicy pi(doc.at("grid").get<std::vector<double>>(),
                           customers,
                           parse_policy_mode(doc.at("mode").get<std::string>()));
      for (const auto& [key, factors] : doc.at("states").items()) {
        const auto k = StateKey::parse(key);
        const auto probs = factors.get<std::vector<std::vector<double>>>();
        if (probs.size() != pi.factor_count()) {
          throw IoError("state " + key + " has " +
                        std::to_string(probs.size()) + " factors, expected " +
                        std::to_string(pi.factor_count()));
        }
        for (std::size_t f = 0; f < probs.size(); ++f) {
          pi.set_probabilities(k, f, probs[f]);
        }
      }
      return pi;
    }
    if (kind == "particles") {
      ParticleSettings settings;
      settings.particles_per_state =
          doc.at("particles_per_state").get<std::size_t>();
      settings.bandwidth = doc.at("bandwidth").get<double>();
      settings.resample_threshold = doc.at("resample_threshold").get<double>();
      settings.seed = doc.at("seed").get<std::uint64_t>();
      ParticlePolicy pi(customers, doc.at("price_min").get<double>(),
                        doc.at("price_max").get<double>(), settings);
      for (const auto& [key, list] : doc.at("states").items()) {
        std::vector<Particle> ps;
        for (const auto& p : list) {
          ps.push_back({p.at("prices").get<std::vector<double>>(),
                        p.at("weight").get<double>()});
        }
        pi.set_particles(StateKey::parse(key), std::move(ps));
      }
      return pi;
    }
    throw IoError("unknown policy kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed policy: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("invalid policy: ") + e.what());
  }
}

void write_policy(const Policy& pi, const fs::path& path) {
  write_text_file(path, policy_to_json(pi).dump(1) + "\n");
}

Policy read_policy(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return policy_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void check_policy_matches(const Policy& pi, const MarketConfig& market) {
  const auto n = static_cast<std::size_t>(market.n_customers);
  if (const auto* cat = std::get_if<CategoricalPolicy>(&pi)) {
    if (cat->customers() != n) {
      throw IoError("policy has " + std::to_string(cat->customers()) +
                    " customers, config has " + std::to_string(n));
    }
    const auto grid = market.price_grid();
    if (grid.empty()) {
      throw IoError("categorical policy needs a discrete price grid");
    }
    if (grid.size() != cat->grid().size() ||
        !std::equal(grid.begin(), grid.end(), cat->grid().begin(),
                    [](double a, double b) { return std::abs(a - b) <= 1e-9; })) {
      throw IoError("policy price grid differs from the config grid");
    }
    for (const auto& [key, factors] : cat->table()) {
      if (key.hour < 1 || key.hour > market.horizon) {
        throw IoError("policy state " + key.to_string() +
                      " is outside the horizon");
      }
    }
    return;
  }
  const auto& pp = std::get<ParticlePolicy>(pi);
  if (pp.customers() != n) {
    throw IoError("policy has " + std::to_string(pp.customers()) +
                  " customers, config has " + std::to_string(n));
  }
  if (pp.price_min() < market.price_min - 1e-9 ||
      pp.price_max() > market.price_max + 1e-9) {
    throw IoError("policy price bounds exceed the config bounds");
  }
  if (market.discrete()) {
    throw IoError("particle policy needs continuous prices (price_grid_step 0)");
  }
}

// --- tables ---

namespace {

std::ostream& prepare(std::ostream& out) {
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_metrics_csv(const std::vector<MetricsRecord>& metrics,
                       std::ostream& out) {
  prepare(out) << kMetricsHeader << '\n';
  for (const auto& m : metrics) {
    out << m.iteration << ',' << m.mean_reward << ',' << m.std_reward << ','
        << m.beta_star << ',' << m.expected_kl << ',' << m.value_loss << ','
        << m.seconds << '\n';
  }
}

void write_metrics_csv(const std::vector<MetricsRecord>& metrics,
                       const fs::path& path) {
  std::ostringstream os;
  write_metrics_csv(metrics, os);
  write_text_file(path, os.str());
}

void write_pricing_csv(const EvalSummary& s, std::ostream& out) {
  const std::size_t n = s.price.empty() ? 0 : s.price.front().size();
  prepare(out) << "hour";
  for (std::size_t i = 0; i < n; ++i) out << ",price_" << i;
  out << '\n';
  for (std::size_t t = 0; t < s.price.size(); ++t) {
    out << t + 1;
    for (double p : s.price[t]) out << ',' << p;
    out << '\n';
  }
}

void write_response_csv(const EvalSummary& s, std::ostream& out) {
  const std::size_t n = s.price.empty() ? 0 : s.price.front().size();
  prepare(out) << "hour";
  for (std::size_t i = 0; i < n; ++i) out << ",load_reduction_" << i;
  for (std::size_t i = 0; i < n; ++i) out << ",unit_profit_" << i;
  out << '\n';
  for (std::size_t t = 0; t < s.price.size(); ++t) {
    out << t + 1;
    for (double x : s.load_reduction[t]) out << ',' << x;
    for (double x : s.unit_profit[t]) out << ',' << x;
    out << '\n';
  }
}

json eval_summary_json(const EvalSummary& s, const MarketConfig& market) {
  const auto& peak = market.peak_hours;
  return json{
      {"episodes", s.episode_rewards.size()},
      {"mean_reward", s.mean_reward},
      {"episode_rewards", s.episode_rewards},
      {"peak_hours", peak},
      {"peak_mean_price", hours_mean(s.price, peak, false)},
      {"offpeak_mean_price", hours_mean(s.price, peak, true)},
      {"peak_mean_load_reduction", hours_mean(s.load_reduction, peak, false)},
      {"offpeak_mean_load_reduction", hours_mean(s.load_reduction, peak, true)},
      {"peak_mean_unit_profit", hours_mean(s.unit_profit, peak, false)},
      {"offpeak_mean_unit_profit", hours_mean(s.unit_profit, peak, true)},
  };
}

// --- manifest ---

RunManifest::RunManifest(fs::path out_dir, std::string command, json resolved)
    : out_dir_(std::move(out_dir)),
      command_(std::move(command)),
      resolved_(std::move(resolved)) {}

void RunManifest::add_artifact(const std::string& name) {
  if (std::find(artifacts_.begin(), artifacts_.end(), name) ==
      artifacts_.end()) {
    artifacts_.push_back(name);
  }
}

void RunManifest::write(const std::string& status,
                        const std::optional<std::string>& error) const {
  json doc{{"command", command_},
           {"status", status},
           {"out_dir", out_dir_.string()},
           {"seed", resolved_.value("seed", json())},
           {"config", resolved_},
           {"artifacts", artifacts_}};
  if (error) doc["error"] = *error;
  write_text_file(out_dir_ / "manifest.json", doc.dump(2) + "\n");
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace nptrust
