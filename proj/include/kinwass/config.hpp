#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "kinwass/vlasov.hpp"

namespace kinwass {

// Parses TOML or JSON text into a JSON tree. Throws ConfigError.
nlohmann::json parse_config_text(const std::string& text, bool is_toml);
// Format picked from the extension (.toml / .json), falling back to sniffing.
nlohmann::json load_config_file(const std::string& path);

// FNV-1a 64 of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

struct SimConfig {
  int d = 1;
  std::size_t N = 4096;
  int grid_n = 256;
  double dt = 1e-3;
  double T = 4.0;
  int sigma = -1;
  std::string initial_kind = "uniform_perturbed";
  nlohmann::json initial = nlohmann::json::object();
  nlohmann::json B = nullptr;  // null or {kind: uniform | sinusoidal, ...}
  std::uint64_t seed = 1;
  int output_every = 100;
  double c_cfl = 0.5;
  bool free_streaming = false;  // force switched off, x' = v

  static SimConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  std::optional<MagneticField> magnetic() const;
  int steps() const;
};

MagneticField magnetic_from_json(const nlohmann::json& j);

// Typed accessors with ConfigError on wrong types.
double get_number(const nlohmann::json& j, const char* key, double def);
int get_int(const nlohmann::json& j, const char* key, int def);
std::string get_string(const nlohmann::json& j, const char* key, const std::string& def);

}  // namespace kinwass
