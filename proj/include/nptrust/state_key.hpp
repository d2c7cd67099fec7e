// Discrete keys over which the tabular policy and value baseline are indexed.

#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "nptrust/mdp.hpp"

namespace nptrust {

struct StateKey {
  int hour = 1;
  std::optional<std::int64_t> demand_bin;

  auto operator<=>(const StateKey&) const = default;
  bool operator==(const StateKey&) const = default;

  /// "t=5" or "t=5,b=2".
  std::string to_string() const;
  static StateKey parse(const std::string& text);
};

enum class KeyMode { kTimeOnly, kTimePlusDemandBins };

struct KeyScheme {
  KeyMode mode = KeyMode::kTimeOnly;
  double bin_width = 1.0;  // kWh, binned mode only

  void validate() const;
};

StateKey key_of(const Observation& obs, const KeyScheme& scheme);

std::string to_string(KeyMode mode);
KeyMode parse_key_mode(const std::string& name);

}  // namespace nptrust
