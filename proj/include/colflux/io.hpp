#pragma once

// JSON persistence for column parameters, policies and configuration files,
// plus small file helpers shared by the command-line tool.

#include <cstddef>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "colflux/column_model.hpp"
#include "colflux/errors.hpp"
#include "colflux/policy.hpp"

namespace colflux {

using Json = nlohmann::ordered_json;

inline constexpr int kPolicyFormatVersion = 1;

// --- files -------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << bytes;
  if (!out) throw Error("failed writing '" + path + "'");
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
}

inline Json read_json_file(const std::string& path) { return parse_json(read_file(path), path); }

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

// --- column parameters ----------------------------------------------------------

inline Json column_params_to_json(const ColumnParams& p) {
  return Json{{"N_T", p.N_T},       {"N_F", p.N_F},
              {"F0", p.F0},         {"zF0", p.zF0},
              {"qF0", p.qF0},       {"alpha", p.alpha},
              {"tau_L", p.tau_L},   {"lambda_K2", p.lambda_K2},
              {"M0", p.M0},         {"L0_below", p.L0_below},
              {"L0_above", p.L0_above}, {"V0", p.V0},
              {"T_bL", p.T_bL},     {"T_bH", p.T_bH},
              {"K_D", p.K_D},       {"K_B", p.K_B},
              {"D0", p.D0},         {"B0", p.B0},
              {"u_max", {p.u_max[0], p.u_max[1]}}};
}

/// Overrides the fields present in `j` on top of `base`. Unknown keys are
/// rejected so that typos do not pass silently.
inline ColumnParams column_params_from_json(const Json& j, ColumnParams base = {}) {
  if (!j.is_object()) throw ConfigError("column parameters must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "N_T") base.N_T = v.get<int>();
      else if (key == "N_F") base.N_F = v.get<int>();
      else if (key == "F0") base.F0 = v.get<double>();
      else if (key == "zF0") base.zF0 = v.get<double>();
      else if (key == "qF0") base.qF0 = v.get<double>();
      else if (key == "alpha") base.alpha = v.get<double>();
      else if (key == "tau_L") base.tau_L = v.get<double>();
      else if (key == "lambda_K2") base.lambda_K2 = v.get<double>();
      else if (key == "M0") base.M0 = v.get<double>();
      else if (key == "L0_below") base.L0_below = v.get<double>();
      else if (key == "L0_above") base.L0_above = v.get<double>();
      else if (key == "V0") base.V0 = v.get<double>();
      else if (key == "T_bL") base.T_bL = v.get<double>();
      else if (key == "T_bH") base.T_bH = v.get<double>();
      else if (key == "K_D") base.K_D = v.get<double>();
      else if (key == "K_B") base.K_B = v.get<double>();
      else if (key == "D0") base.D0 = v.get<double>();
      else if (key == "B0") base.B0 = v.get<double>();
      else if (key == "u_max") base.u_max = {v.at(0).get<double>(), v.at(1).get<double>()};
      else throw ConfigError("unknown column parameter '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("column parameters: ") + e.what());
  }
  base.validate();
  return base;
}

// --- policies ----------------------------------------------------------------------

/// Inputs are written 1-based with their measurement names; weights as
/// row-major [fan_out][fan_in] arrays.
inline Json policy_to_json(const PolicyParams& params, const Json& meta = Json::object()) {
  const PolicySpec& spec = params.spec();
  const MeasurementLayout lay{spec.measurement_size - 5};
  Json inputs = Json::array(), names = Json::array(), acts = Json::array();
  for (std::size_t i : spec.inputs) {
    inputs.push_back(i + 1);
    names.push_back(spec.measurement_size >= 8 ? lay.name(i) : std::to_string(i + 1));
  }
  for (Activation a : spec.activations) acts.push_back(to_string(a));
  Json layers = Json::array();
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto W = params.W(l);
    const std::size_t in = spec.fan_in(l);
    Json rows = Json::array();
    for (std::size_t r = 0; r < spec.fan_out(l); ++r) {
      rows.push_back(std::vector<double>(W.begin() + static_cast<std::ptrdiff_t>(r * in),
                                         W.begin() + static_cast<std::ptrdiff_t>((r + 1) * in)));
    }
    const auto b = params.b(l);
    layers.push_back(Json{{"W", rows}, {"b", std::vector<double>(b.begin(), b.end())}});
  }
  const auto H = params.H();
  std::vector<int> frozen;
  for (auto f : params.frozen()) frozen.push_back(f ? 1 : 0);
  return Json{{"format", "colflux-policy"},
              {"version", kPolicyFormatVersion},
              {"spec",
               {{"inputs", inputs},
                {"input_names", names},
                {"hidden", spec.hidden},
                {"activations", acts},
                {"u_max", {spec.u_max[0], spec.u_max[1]}},
                {"measurement_size", spec.measurement_size}}},
              {"H", std::vector<double>(H.begin(), H.end())},
              {"frozen", frozen},
              {"layers", layers},
              {"meta", meta}};
}

inline PolicyParams policy_from_json(const Json& j) {
  try {
    if (j.value("format", std::string()) != "colflux-policy") throw FormatError("not a policy file");
    if (j.at("version").get<int>() != kPolicyFormatVersion) {
      throw FormatError("unsupported policy format version " + j.at("version").dump());
    }
    const Json& js = j.at("spec");
    PolicySpec spec;
    for (const auto& v : js.at("inputs")) {
      const auto one_based = v.get<std::size_t>();
      if (one_based == 0) throw FormatError("policy inputs are 1-based");
      spec.inputs.push_back(one_based - 1);
    }
    spec.hidden = js.at("hidden").get<std::vector<std::size_t>>();
    for (const auto& a : js.at("activations")) spec.activations.push_back(activation_from_string(a.get<std::string>()));
    spec.u_max = {js.at("u_max").at(0).get<double>(), js.at("u_max").at(1).get<double>()};
    spec.measurement_size = js.at("measurement_size").get<std::size_t>();
    spec.validate();
    PolicyParams p(spec);
    const auto H = j.at("H").get<std::vector<double>>();
    if (H.size() != spec.input_count()) throw ShapeError("policy file: H has " + std::to_string(H.size()) + " entries");
    std::copy(H.begin(), H.end(), p.H().begin());
    if (j.contains("frozen")) {
      const auto fr = j.at("frozen").get<std::vector<int>>();
      if (fr.size() != H.size()) throw ShapeError("policy file: frozen mask has wrong length");
      for (std::size_t i = 0; i < fr.size(); ++i) {
        if (fr[i] != 0) p.freeze(i);
      }
    }
    const Json& layers = j.at("layers");
    if (layers.size() != spec.layer_count()) throw ShapeError("policy file: wrong number of layers");
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
      const Json& rows = layers.at(l).at("W");
      const std::size_t in = spec.fan_in(l), out = spec.fan_out(l);
      if (rows.size() != out) throw ShapeError("policy file: layer " + std::to_string(l) + " has wrong row count");
      auto W = p.W(l);
      for (std::size_t r = 0; r < out; ++r) {
        const auto row = rows.at(r).get<std::vector<double>>();
        if (row.size() != in) throw ShapeError("policy file: layer " + std::to_string(l) + " has wrong row length");
        std::copy(row.begin(), row.end(), W.begin() + static_cast<std::ptrdiff_t>(r * in));
      }
      const auto b = layers.at(l).at("b").get<std::vector<double>>();
      if (b.size() != out) throw ShapeError("policy file: layer " + std::to_string(l) + " has wrong bias length");
      std::copy(b.begin(), b.end(), p.b(l).begin());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("policy file: ") + e.what());
  }
}

inline void save_policy(const std::string& path, const PolicyParams& params, const Json& meta = Json::object()) {
  write_file(path, dump_json(policy_to_json(params, meta)));
}

inline PolicyParams load_policy(const std::string& path) { return policy_from_json(read_json_file(path)); }

}  // namespace colflux
