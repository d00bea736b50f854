#pragma once

// Layered settings for the command-line tool. A value comes from the command
// line if given there, otherwise from the JSON config file, otherwise from the
// built-in default.

#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>

#include "colflux/column_model.hpp"
#include "colflux/errors.hpp"
#include "colflux/io.hpp"
#include "colflux/mpc.hpp"
#include "colflux/training.hpp"

namespace colflux {

inline const char* const kSeedEnvVar = "COLFLUX_SEED";

/// Section `name` of a config object, or an empty object when absent.
inline Json config_section(const Json& config, const std::string& name) {
  if (config.is_null()) return Json::object();
  if (!config.is_object()) throw ConfigError("config file must hold a JSON object");
  if (!config.contains(name)) return Json::object();
  const Json& s = config.at(name);
  if (!s.is_object()) throw ConfigError("config section '" + name + "' must be an object");
  return s;
}

template <class T>
T layered(const std::optional<T>& flag, const Json& section, const std::string& key, T fallback) {
  if (flag) return *flag;
  if (section.is_object() && section.contains(key)) {
    try {
      return section.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  return fallback;
}

/// Seeds: flag, then the COLFLUX_SEED environment variable, then the config
/// file, then the default.
inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const Json& section, std::uint64_t fallback,
                                  const std::string& key = "seed") {
  if (flag) return *flag;
  if (const char* env = std::getenv(kSeedEnvVar); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string(kSeedEnvVar) + " is not an unsigned integer: '" + env + "'");
    }
  }
  return layered<std::uint64_t>(std::nullopt, section, key, fallback);
}

inline TrainConfig train_config_from_json(const Json& j, TrainConfig base) {
  if (!j.is_object()) throw ConfigError("train settings must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "phases") {
        base.phases.clear();
        for (const auto& ph : v) {
          base.phases.push_back({ph.at("iterations").get<std::size_t>(), ph.at("samples").get<std::size_t>(),
                                 ph.value("weight", 1.0)});
        }
      } else if (key == "learning_rate") base.hyper.learning_rate = v.get<double>();
      else if (key == "decay") base.hyper.decay = v.get<double>();
      else if (key == "epsilon") base.hyper.epsilon = v.get<double>();
      else if (key == "lambda1" || key == "lambda2") {
        ElasticNet en = base.penalty.value_or(ElasticNet{});
        (key == "lambda1" ? en.lambda1 : en.lambda2) = v.get<double>();
        base.penalty = en;
      } else if (key == "t_f") base.sim.t_f = v.get<double>();
      else if (key == "h") base.sim.h = v.get<double>();
      else if (key == "pool_size") base.pool_size = v.get<std::size_t>();
      else if (key == "seed" || key == "workers" || key == "preset") continue;  // handled by the caller
      else throw ConfigError("unknown train setting '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train settings: ") + e.what());
  }
  base.validate();
  return base;
}

inline OcpConfig ocp_config_from_json(const Json& j, OcpConfig base) {
  if (!j.is_object()) throw ConfigError("mpc settings must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "dt") base.dt = v.get<double>();
      else if (key == "horizon") base.horizon = v.get<double>();
      else if (key == "h") base.h = v.get<double>();
      else if (key == "max_iterations") base.max_iterations = v.get<std::size_t>();
      else if (key == "memory") base.memory = v.get<std::size_t>();
      else if (key == "gradient_tolerance") base.gradient_tolerance = v.get<double>();
      else throw ConfigError("unknown mpc setting '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mpc settings: ") + e.what());
  }
  (void)base.steps_per_interval();
  (void)base.intervals();
  return base;
}

inline Json train_config_to_json(const TrainConfig& c) {
  Json phases = Json::array();
  for (const auto& ph : c.phases) phases.push_back(Json{{"iterations", ph.iterations}, {"samples", ph.samples}, {"weight", ph.weight}});
  Json j{{"phases", phases},
         {"learning_rate", c.hyper.learning_rate},
         {"decay", c.hyper.decay},
         {"epsilon", c.hyper.epsilon},
         {"t_f", c.sim.t_f},
         {"h", c.sim.h},
         {"pool_size", c.pool_size},
         {"seed", c.seed}};
  if (c.penalty) {
    j["lambda1"] = c.penalty->lambda1;
    j["lambda2"] = c.penalty->lambda2;
  }
  return j;
}

inline Json ocp_config_to_json(const OcpConfig& c) {
  return Json{{"dt", c.dt},     {"horizon", c.horizon},   {"h", c.h}, {"max_iterations", c.max_iterations},
              {"memory", c.memory}, {"gradient_tolerance", c.gradient_tolerance}};
}

}  // namespace colflux
