#include "nptrust/state_key.hpp"

#include <cmath>
#include <stdexcept>

namespace nptrust {

std::string StateKey::to_string() const {
  std::string s = "t=" + std::to_string(hour);
  if (demand_bin) s += ",b=" + std::to_string(*demand_bin);
  return s;
}

StateKey StateKey::parse(const std::string& text) {
  StateKey key;
  std::size_t pos = 0;
  try {
    if (text.rfind("t=", 0) != 0) throw std::invalid_argument("missing t=");
    std::size_t used = 0;
    key.hour = std::stoi(text.substr(2), &used);
    pos = 2 + used;
    if (pos < text.size()) {
      if (text.compare(pos, 3, ",b=") != 0) {
        throw std::invalid_argument("expected ,b=");
      }
      key.demand_bin = std::stoll(text.substr(pos + 3), &used);
      pos += 3 + used;
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("malformed state key '" + text + "'");
  }
  if (pos != text.size()) {
    throw std::invalid_argument("malformed state key '" + text + "'");
  }
  return key;
}

void KeyScheme::validate() const {
  if (mode == KeyMode::kTimePlusDemandBins &&
      !(bin_width > 0.0 && std::isfinite(bin_width))) {
    throw std::invalid_argument("bin_width must be > 0 in binned key mode");
  }
}

StateKey key_of(const Observation& obs, const KeyScheme& scheme) {
  StateKey key;
  key.hour = obs.t;
  if (scheme.mode == KeyMode::kTimePlusDemandBins) {
    key.demand_bin = static_cast<std::int64_t>(
        std::floor(obs.total_base_demand() / scheme.bin_width));
  }
  return key;
}

std::string to_string(KeyMode mode) {
  return mode == KeyMode::kTimeOnly ? "time_only" : "time_plus_demand_bins";
}

KeyMode parse_key_mode(const std::string& name) {
  if (name == "time_only") return KeyMode::kTimeOnly;
  if (name == "time_plus_demand_bins") return KeyMode::kTimePlusDemandBins;
  throw std::invalid_argument("unknown key_scheme '" + name +
                              "' (expected time_only or time_plus_demand_bins)");
}

}  // namespace nptrust
