#include "kinwass/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "kinwass/errors.hpp"
#include "kinwass/numeric.hpp"

namespace kinwass {

nlohmann::json parse_config_text(const std::string& text, bool is_toml) {
  if (!is_toml) {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid JSON config: ") + e.what());
    }
  }
  try {
    toml::table tbl = toml::parse(text);
    std::ostringstream os;
    os << toml::json_formatter{tbl};
    return nlohmann::json::parse(os.str());
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "invalid TOML config: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(os.str());
  }
}

nlohmann::json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  std::string text = os.str();
  auto ends_with = [&](const std::string& suf) {
    return path.size() >= suf.size() && path.compare(path.size() - suf.size(), suf.size(), suf) == 0;
  };
  bool is_toml;
  if (ends_with(".toml"))
    is_toml = true;
  else if (ends_with(".json"))
    is_toml = false;
  else {
    auto pos = text.find_first_not_of(" \t\r\n");
    is_toml = pos == std::string::npos || text[pos] != '{';
  }
  return parse_config_text(text, is_toml);
}

std::string config_hash(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

double get_number(const nlohmann::json& j, const char* key, double def) {
  if (!j.is_object() || !j.contains(key)) return def;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string("config key '") + key + "' must be a number");
  return v.get<double>();
}

int get_int(const nlohmann::json& j, const char* key, int def) {
  if (!j.is_object() || !j.contains(key)) return def;
  const auto& v = j.at(key);
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>())
    return static_cast<int>(v.get<double>());
  throw ConfigError(std::string("config key '") + key + "' must be an integer");
}

std::string get_string(const nlohmann::json& j, const char* key, const std::string& def) {
  if (!j.is_object() || !j.contains(key)) return def;
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
  return v.get<std::string>();
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("simulation config must be a table");
  static const char* known[] = {"d",     "N",    "grid_n", "dt",           "T",    "sigma",
                                "initial", "B",  "seed",   "output_every", "c_cfl",
                                "free_streaming"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown simulation key '" + it.key() + "'");
  }
  SimConfig c;
  c.d = get_int(j, "d", c.d);
  int N = get_int(j, "N", static_cast<int>(c.N));
  if (N <= 0) throw ConfigError("simulation.N must be > 0");
  c.N = static_cast<std::size_t>(N);
  c.grid_n = get_int(j, "grid_n", c.grid_n);
  c.dt = get_number(j, "dt", c.dt);
  c.T = get_number(j, "T", c.T);
  c.sigma = get_int(j, "sigma", c.sigma);
  c.output_every = get_int(j, "output_every", c.output_every);
  c.c_cfl = get_number(j, "c_cfl", c.c_cfl);
  int seed = get_int(j, "seed", static_cast<int>(c.seed));
  if (seed < 0) throw ConfigError("seed must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  if (j.contains("initial")) {
    c.initial = j.at("initial");
    if (!c.initial.is_object()) throw ConfigError("simulation.initial must be a table");
    c.initial_kind = get_string(c.initial, "kind", c.initial_kind);
    c.initial.erase("kind");
  }
  if (j.contains("B")) c.B = j.at("B");
  if (j.contains("free_streaming")) {
    if (!j.at("free_streaming").is_boolean())
      throw ConfigError("simulation.free_streaming must be a boolean");
    c.free_streaming = j.at("free_streaming").get<bool>();
  }
  if (c.d < 1 || c.d > 3) throw ConfigError("simulation.d must be 1, 2 or 3");
  if (c.grid_n < 2 || (c.grid_n & (c.grid_n - 1)) != 0)
    throw ConfigError("simulation.grid_n must be a power of two");
  if (!(c.dt > 0.0) || !(c.T >= 0.0)) throw ConfigError("simulation needs dt > 0 and T >= 0");
  if (c.sigma != 1 && c.sigma != -1) throw ConfigError("simulation.sigma must be +1 or -1");
  if (c.output_every < 1) throw ConfigError("simulation.output_every must be >= 1");
  if (!(c.c_cfl > 0.0)) throw ConfigError("simulation.c_cfl must be > 0");
  if (!c.B.is_null()) magnetic_from_json(c.B);
  return c;
}

nlohmann::json SimConfig::to_json() const {
  nlohmann::json init = initial;
  init["kind"] = initial_kind;
  return {{"d", d},         {"N", N},         {"grid_n", grid_n},
          {"dt", dt},       {"T", T},         {"sigma", sigma},
          {"initial", init}, {"B", B},        {"seed", seed},
          {"output_every", output_every},     {"c_cfl", c_cfl},
          {"free_streaming", free_streaming}};
}

int SimConfig::steps() const { return static_cast<int>(std::llround(T / dt)); }

std::optional<MagneticField> SimConfig::magnetic() const {
  if (B.is_null()) return std::nullopt;
  return magnetic_from_json(B);
}

MagneticField magnetic_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("B must be a table");
  std::string kind = get_string(j, "kind", "uniform");
  if (kind == "uniform") {
    std::array<double, 3> b{0.0, 0.0, 0.0};
    if (j.contains("B")) {
      const auto& v = j.at("B");
      if (v.is_number()) {
        b[2] = v.get<double>();
      } else if (v.is_array() && v.size() == 3) {
        for (int a = 0; a < 3; ++a) b[a] = v.at(a).get<double>();
      } else {
        throw ConfigError("B.B must be a number (out-of-plane) or a 3-vector");
      }
    }
    return MagneticField::uniform(b);
  }
  if (kind == "sinusoidal") {
    // out-of-plane B0 + a sin(2 pi k x_1)
    double B0 = get_number(j, "B0", 0.0), a = get_number(j, "amplitude", 0.0);
    double k = get_number(j, "mode", 1.0);
    MagneticField m;
    const double w = 2.0 * std::numbers::pi * k;
    m.B = [=](double, const double* x) {
      return std::array<double, 3>{0.0, 0.0, B0 + a * std::sin(w * x[0])};
    };
    m.sup_norm = std::abs(B0) + std::abs(a);
    // Lipschitz, hence log-Lipschitz on |x - y| < 1/e with the same constant
    m.loglip_const = w * std::abs(a);
    m.description = j;
    return m;
  }
  throw ConfigError("unknown magnetic field kind '" + kind + "'");
}

}  // namespace kinwass
