#include "nptrust/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nptrust/io.hpp"

#ifndef NPTRUST_CONFIG_DIR
#define NPTRUST_CONFIG_DIR "configs"
#endif

namespace nptrust {

namespace fs = std::filesystem;

std::string config_dir() {
  if (const char* dir = std::getenv("NPTRUST_CONFIG_DIR")) return dir;
  return NPTRUST_CONFIG_DIR;
}

namespace {

constexpr int kRunFailed = 1;
constexpr int kUsage = 2;

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

// Accepts a path, or a bare name looked up in the config directory.
fs::path find_config(const std::string& name) {
  const fs::path direct(name);
  if (fs::is_regular_file(direct)) return direct;
  if (direct.parent_path().empty()) {
    for (const auto& candidate :
         {fs::path(config_dir()) / name, fs::path(config_dir()) / (name + ".json")}) {
      if (fs::is_regular_file(candidate)) return candidate;
    }
  }
  throw IoError("config file not found: " + name);
}

json gather_settings(const CommonArgs& args) {
  json s = default_settings();
  if (!args.config.empty()) {
    merge_settings(s, read_json_file(find_config(args.config)));
  }
  apply_environment(s);
  for (const auto& o : args.overrides) apply_override(s, o);
  if (args.seed) s["seed"] = *args.seed;
  return s;
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string());
  }
}

void write_random_baseline(const RandomBaseline& rb, const fs::path& path) {
  std::ostringstream os;
  os << std::setprecision(17) << "episode,reward\n";
  for (std::size_t i = 0; i < rb.rewards.size(); ++i) {
    os << i << ',' << rb.rewards[i] << '\n';
  }
  write_text_file(path, os.str());
}

// Runs one training job into `dir`; returns the final iteration's mean
// reward. The manifest records progress and failures.
double train_into(const json& merged, const fs::path& dir) {
  const Settings s = resolve_settings(merged);
  prepare_dir(dir);
  RunManifest manifest(dir, "train", s.resolved);
  manifest.write("running");
  try {
    const auto result = train(s.market, s.train);
    write_metrics_csv(result.metrics, dir / "metrics.csv");
    manifest.add_artifact("metrics.csv");
    write_policy(result.policy, dir / "policy.json");
    manifest.add_artifact("policy.json");
    if (s.baselines) {
      const int episodes = s.train.iterations * s.train.episodes_per_iteration;
      write_random_baseline(
          random_policy_rewards(s.market, s.train, episodes,
                                derive_seed(s.train.seed, 0x72616e64ULL, 0)),
          dir / "random_baseline.csv");
      manifest.add_artifact("random_baseline.csv");
      if (s.train.action_mode == ActionMode::kDiscrete) {
        const auto q = train_qlearning(s.market, s.train);
        write_metrics_csv(q.metrics, dir / "qlearning_metrics.csv");
        manifest.add_artifact("qlearning_metrics.csv");
      }
    }
    manifest.add_artifact("manifest.json");
    manifest.write("complete");
    return result.metrics.back().mean_reward;
  } catch (const std::exception& e) {
    manifest.write("failed", std::string(e.what()));
    throw;
  }
}

int cmd_train(const CommonArgs& args, std::ostream& out) {
  const fs::path dir = args.out.empty() ? fs::path("runs/train") : fs::path(args.out);
  const double final_reward = train_into(gather_settings(args), dir);
  out << "trained; final mean reward " << final_reward << "; outputs in "
      << dir.string() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& policy_path,
             std::optional<int> episodes, std::ostream& out) {
  const Settings s = resolve_settings(gather_settings(args));
  const Policy pi = read_policy(policy_path);
  check_policy_matches(pi, s.market);
  const fs::path dir = args.out.empty() ? fs::path("runs/eval") : fs::path(args.out);
  prepare_dir(dir);
  RunManifest manifest(dir, "eval", s.resolved);
  manifest.write("running");
  try {
    const int n = episodes.value_or(s.eval_episodes);
    if (n < 1) throw ConfigError("episodes", "must be >= 1");
    const auto summary =
        evaluate(pi, s.market, s.train.key_scheme, n, s.train.seed);
    std::ostringstream pricing, response;
    write_pricing_csv(summary, pricing);
    write_response_csv(summary, response);
    write_text_file(dir / "pricing.csv", pricing.str());
    manifest.add_artifact("pricing.csv");
    write_text_file(dir / "response.csv", response.str());
    manifest.add_artifact("response.csv");
    auto doc = eval_summary_json(summary, s.market);
    doc["policy"] = policy_path;
    write_text_file(dir / "summary.json", doc.dump(2) + "\n");
    manifest.add_artifact("summary.json");
    manifest.add_artifact("manifest.json");
    manifest.write("complete");
    out << "evaluated " << n << " episodes; mean reward " << summary.mean_reward
        << "; outputs in " << dir.string() << "\n";
  } catch (const std::exception& e) {
    manifest.write("failed", std::string(e.what()));
    throw;
  }
  return 0;
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

GridAxis parse_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw CLI::ValidationError("--grid", "expected KEY=V1,V2,... got '" + text + "'");
  }
  GridAxis axis{text.substr(0, eq), {}};
  std::stringstream ss(text.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) axis.values.push_back(item);
  }
  return axis;
}

std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

int cmd_sweep(const CommonArgs& args, const std::vector<std::string>& grid,
              std::ostream& out, std::ostream& err) {
  std::vector<GridAxis> axes;
  for (const auto& g : grid) axes.push_back(parse_axis(g));
  if (axes.empty() || std::any_of(axes.begin(), axes.end(), [](const auto& a) {
        return a.values.empty();
      })) {
    err << "sweep: empty parameter grid\n"
        << "usage: nptrust sweep --config NAME --grid KEY=V1,V2,... "
           "[--grid ...] [--out DIR]\n";
    return kUsage;
  }
  const json base = gather_settings(args);
  // Reject unknown keys before any run starts.
  for (const auto& a : axes) {
    if (!base.contains(a.key)) throw ConfigError(a.key, "unknown setting");
  }

  const fs::path dir = args.out.empty() ? fs::path("runs/sweep") : fs::path(args.out);
  prepare_dir(dir);
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.values.size();

  std::ostringstream index;
  index << std::setprecision(17) << "run,dir";
  for (const auto& a : axes) index << ',' << csv_field(a.key);
  index << ",status,final_mean_reward,error\n";

  int failures = 0;
  for (std::size_t r = 0; r < total; ++r) {
    json settings = base;
    std::vector<std::string> chosen;
    std::size_t rest = r;
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
      chosen.push_back(it->values[rest % it->values.size()]);
      rest /= it->values.size();
    }
    std::reverse(chosen.begin(), chosen.end());
    std::ostringstream name;
    name << "run_" << std::setw(3) << std::setfill('0') << r;
    const fs::path run_dir = dir / name.str();

    index << r << ',' << csv_field(name.str());
    for (const auto& v : chosen) index << ',' << csv_field(v);
    try {
      for (std::size_t i = 0; i < axes.size(); ++i) {
        apply_value(settings, axes[i].key, chosen[i]);
      }
      const double reward = train_into(settings, run_dir);
      index << ",complete," << reward << ",\n";
      out << name.str() << ": final mean reward " << reward << "\n";
    } catch (const std::exception& e) {
      ++failures;
      index << ",failed,," << csv_field(e.what()) << '\n';
      err << name.str() << ": " << e.what() << "\n";
    }
  }
  write_text_file(dir / "index.csv", index.str());
  out << total - static_cast<std::size_t>(failures) << "/" << total
      << " runs completed; index in " << (dir / "index.csv").string() << "\n";
  return failures ? kRunFailed : 0;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config,
                  "config file, or a name under the config directory");
  cmd->add_option("--set", args.overrides, "override KEY=VALUE (repeatable)")
      ->take_all();
  cmd->add_option("--seed", args.seed, "base random seed");
  cmd->add_option("--out", args.out, "output directory");
}

}  // namespace

int run_cli(const std::vector<std::string>& argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Nonparametric trust-region pricing for demand response"};
  app.footer("Settings may also come from NPTRUST_<KEY> environment variables "
             "(e.g. NPTRUST_DELTA=0.02); --set wins over the environment.");
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, sweep_args;
  std::string policy_path;
  std::optional<int> episodes;
  std::vector<std::string> grid;

  auto* train_cmd = app.add_subcommand("train", "train a policy");
  add_common(train_cmd, train_args);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved policy");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--policy", policy_path, "policy dump (policy.json)")
      ->required();
  eval_cmd->add_option("--episodes", episodes, "evaluation episodes");
  auto* sweep_cmd = app.add_subcommand("sweep", "train over a parameter grid");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--grid", grid, "KEY=V1,V2,... (repeatable)");

  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args, out);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, policy_path, episodes, out);
    return cmd_sweep(sweep_args, grid, out, err);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRunFailed;
  }
}

}  // namespace nptrust
