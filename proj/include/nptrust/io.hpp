// Settings resolution and on-disk formats.
//
// Settings are one flat JSON object. Resolution order, later wins: built-in
// defaults, the config file, NPTRUST_<KEY> environment variables, --set
// overrides, then the explicit --seed flag. Values given on the command line
// or in the environment are parsed as JSON and fall back to a plain string.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nptrust/trainer.hpp"

namespace nptrust {

using nlohmann::json;

inline constexpr const char* kEnvPrefix = "NPTRUST_";

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Settings {
  MarketConfig market;
  TrainConfig train;
  bool baselines = false;   // also run Q-learning and the random policy
  int eval_episodes = 10;
  json resolved;            // every value after resolution
};

/// Built-in defaults for every recognised key.
json default_settings();

/// Reads a JSON object. Throws IoError naming the path.
json read_json_file(const std::filesystem::path& path);

/// "KEY=VALUE" applied to `settings`; unknown keys throw ConfigError.
void apply_override(json& settings, const std::string& assignment);
void apply_value(json& settings, const std::string& key,
                 const std::string& text);

/// Parses a command-line value as JSON, or keeps it as a string.
json parse_value(const std::string& text);

/// Applies NPTRUST_<KEY> variables found in the environment.
void apply_environment(json& settings);

/// Merges a config file's object into the defaults, rejecting unknown keys.
void merge_settings(json& settings, const json& file);

/// Typed view of a merged settings object. Demand profiles and the
/// per-customer alpha/beta lists cycle when n_customers exceeds the rows
/// given; continuous mode forces price_grid_step to 0. The returned
/// `resolved` holds the expanded values.
Settings resolve_settings(const json& settings);

// --- policy dump ---

json policy_to_json(const Policy& pi);
Policy policy_from_json(const json& doc);
void write_policy(const Policy& pi, const std::filesystem::path& path);
Policy read_policy(const std::filesystem::path& path);

/// Throws IoError when the policy does not fit the market (customer count,
/// price grid or bounds).
void check_policy_matches(const Policy& pi, const MarketConfig& market);

// --- tables ---

inline constexpr const char* kMetricsHeader =
    "iteration,mean_reward,std_reward,beta_star,expected_kl,value_loss,seconds";

void write_metrics_csv(const std::vector<MetricsRecord>& metrics,
                       std::ostream& out);
void write_metrics_csv(const std::vector<MetricsRecord>& metrics,
                       const std::filesystem::path& path);

void write_pricing_csv(const EvalSummary& s, std::ostream& out);
void write_response_csv(const EvalSummary& s, std::ostream& out);
json eval_summary_json(const EvalSummary& s, const MarketConfig& market);

// --- run manifest ---

class RunManifest {
 public:
  RunManifest(std::filesystem::path out_dir, std::string command,
              json resolved);

  void add_artifact(const std::string& name);
  /// Writes manifest.json with the given status ("running", "complete",
  /// "failed").
  void write(const std::string& status,
             const std::optional<std::string>& error = std::nullopt) const;

  const std::filesystem::path& out_dir() const { return out_dir_; }

 private:
  std::filesystem::path out_dir_;
  std::string command_;
  json resolved_;
  std::vector<std::string> artifacts_;
};

void write_text_file(const std::filesystem::path& path,
                     const std::string& text);

}  // namespace nptrust
