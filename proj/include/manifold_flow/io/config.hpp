#pragma once

// JSON model / fit configuration (schema_version 1), strict: unknown keys are errors.
//
// {
//   "schema_version": 1,
//   "chart": {"kind": "sphere", "n": 2}
//          | {"kind": "euclidean", "n": 1}
//          | {"kind": "product", "components": [<chart>, ...], "n"?: total},
//   "base":  {"kind": "standard_normal", "n"?: 2} | {"kind": "uniform_ball", "n"?: 2, "R": 1.5},
//   "flow"?: {"direction"?: "generative" | "normalizing",
//             "layers": [{"kind": "planar", "w": [...], "u_raw": [...], "b": 0.0}
//                      | {"kind": "radial", "center": [...], "alpha_raw": 0.0, "beta_raw": 0.0}
//                      | {"kind": "planar" | "radial", "seed": 7}]}
// }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "manifold_flow/charts.hpp"
#include "manifold_flow/density.hpp"
#include "manifold_flow/errors.hpp"
#include "manifold_flow/estimation.hpp"
#include "manifold_flow/flows.hpp"
#include "manifold_flow/random.hpp"

namespace manifold_flow::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

inline void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || item.key() == k;
    if (!known) throw ConfigError(where + ": unknown field '" + item.key() + "'");
  }
}

inline const json& field(const json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(where + ": missing field '" + key + "'");
  return *it;
}

inline std::string get_string(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline double get_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

inline std::int64_t get_integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return v.get<std::int64_t>();
}

inline Vector get_vector(const json& v, int n, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array");
  if (static_cast<int>(v.size()) != n) {
    throw ConfigError(where + ": expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
  }
  Vector out(n);
  for (int i = 0; i < n; ++i) out[i] = get_number(v[static_cast<std::size_t>(i)], where);
  return out;
}

inline json vector_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline LayerKind parse_layer_kind(const std::string& s, const std::string& where) {
  if (s == "planar") return LayerKind::planar;
  if (s == "radial") return LayerKind::radial;
  throw ConfigError(where + ": unknown layer kind '" + s + "'");
}

}  // namespace detail

inline Chart chart_from_json(const json& j, const std::string& where = "chart") {
  using namespace detail;
  require_object(j, where);
  const std::string kind = get_string(j, "kind", where);
  if (kind == "sphere" || kind == "euclidean") {
    allow_keys(j, {"kind", "n"}, where);
    const auto n = get_integer(field(j, "n", where), where + ".n");
    if (n < 1 || n > 1000) throw ConfigError(where + ".n: must be in [1, 1000]");
    return kind == "sphere" ? Chart::sphere(static_cast<int>(n)) : Chart::euclidean(static_cast<int>(n));
  }
  if (kind == "product") {
    allow_keys(j, {"kind", "components", "n"}, where);
    const json& comps = field(j, "components", where);
    if (!comps.is_array() || comps.empty()) throw ConfigError(where + ".components: expected a non-empty array");
    std::vector<Chart> parts;
    for (std::size_t i = 0; i < comps.size(); ++i) {
      parts.push_back(chart_from_json(comps[i], where + ".components[" + std::to_string(i) + "]"));
    }
    Chart chart{ProductChart(std::move(parts))};
    if (j.contains("n") && get_integer(j["n"], where + ".n") != chart.intrinsic_dim()) {
      throw ConfigError(where + ".n: does not match the sum of component dimensions (" +
                        std::to_string(chart.intrinsic_dim()) + ")");
    }
    return chart;
  }
  throw ConfigError(where + ": unknown chart kind '" + kind + "'");
}

inline json chart_to_json(const Chart& chart) {
  return std::visit(
      [](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, StereographicChart>) {
          return {{"kind", "sphere"}, {"n", c.intrinsic_dim()}};
        } else if constexpr (std::is_same_v<T, EuclideanChart>) {
          return {{"kind", "euclidean"}, {"n", c.intrinsic_dim()}};
        } else {
          json comps = json::array();
          for (const auto& part : c.components()) comps.push_back(chart_to_json(part));
          return {{"kind", "product"}, {"components", comps}};
        }
      },
      chart.variant());
}

inline BaseDensity base_from_json(const json& j, int n, const std::string& where = "base") {
  using namespace detail;
  require_object(j, where);
  const std::string kind = get_string(j, "kind", where);
  if (j.contains("n") && get_integer(j["n"], where + ".n") != n) {
    throw ConfigError(where + ".n: does not match chart dimension " + std::to_string(n));
  }
  if (kind == "standard_normal") {
    allow_keys(j, {"kind", "n"}, where);
    return BaseDensity::standard_normal(n);
  }
  if (kind == "uniform_ball") {
    allow_keys(j, {"kind", "n", "R"}, where);
    const double radius = get_number(field(j, "R", where), where + ".R");
    if (!(radius > 0.0)) throw ConfigError(where + ".R: must be positive");
    return BaseDensity::uniform_ball(n, radius);
  }
  throw ConfigError(where + ": unknown base kind '" + kind + "'");
}

inline json base_to_json(const BaseDensity& base) {
  if (base.kind() == BaseDensity::Kind::standard_normal) {
    return {{"kind", "standard_normal"}, {"n", base.dim()}};
  }
  return {{"kind", "uniform_ball"}, {"n", base.dim()}, {"R", base.radius()}};
}

inline Layer layer_from_json(const json& j, int n, const std::string& where) {
  using namespace detail;
  require_object(j, where);
  const LayerKind kind = parse_layer_kind(get_string(j, "kind", where), where + ".kind");
  try {
    if (j.contains("seed")) {
      allow_keys(j, {"kind", "seed"}, where);
      const auto seed = get_integer(j["seed"], where + ".seed");
      Engine rng = make_engine(static_cast<std::uint64_t>(seed));
      return random_layer(kind, n, rng);
    }
    if (kind == LayerKind::planar) {
      allow_keys(j, {"kind", "w", "u_raw", "b"}, where);
      return PlanarLayer(get_vector(field(j, "w", where), n, where + ".w"),
                         get_vector(field(j, "u_raw", where), n, where + ".u_raw"),
                         get_number(field(j, "b", where), where + ".b"));
    }
    allow_keys(j, {"kind", "center", "alpha_raw", "beta_raw"}, where);
    return RadialLayer(get_vector(field(j, "center", where), n, where + ".center"),
                       get_number(field(j, "alpha_raw", where), where + ".alpha_raw"),
                       get_number(field(j, "beta_raw", where), where + ".beta_raw"));
  } catch (const ContractViolation& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline json layer_to_json(const Layer& layer) {
  using detail::vector_json;
  return std::visit(
      [](const auto& l) -> json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, PlanarLayer>) {
          return {{"kind", "planar"}, {"w", vector_json(l.w())}, {"u_raw", vector_json(l.u_raw())}, {"b", l.b()}};
        } else {
          return {{"kind", "radial"},
                  {"center", vector_json(l.center())},
                  {"alpha_raw", l.alpha_raw()},
                  {"beta_raw", l.beta_raw()}};
        }
      },
      layer);
}

inline ManifoldDensity model_from_json(const json& j) {
  using namespace detail;
  require_object(j, "config");
  allow_keys(j, {"schema_version", "chart", "base", "flow"}, "config");
  const auto version = get_integer(field(j, "schema_version", "config"), "config.schema_version");
  if (version != kSchemaVersion) {
    throw ConfigError("config.schema_version: unsupported version " + std::to_string(version));
  }
  const Chart chart = chart_from_json(field(j, "chart", "config"));
  const int n = chart.intrinsic_dim();
  const BaseDensity base = base_from_json(field(j, "base", "config"), n);
  FlowDirection direction = FlowDirection::generative;
  std::vector<Layer> layers;
  if (j.contains("flow")) {
    const json& flow = j["flow"];
    require_object(flow, "flow");
    allow_keys(flow, {"direction", "layers"}, "flow");
    if (flow.contains("direction")) {
      const std::string d = get_string(flow, "direction", "flow");
      if (d == "generative") {
        direction = FlowDirection::generative;
      } else if (d == "normalizing") {
        direction = FlowDirection::normalizing;
      } else {
        throw ConfigError("flow.direction: expected 'generative' or 'normalizing', got '" + d + "'");
      }
    }
    const json& arr = field(flow, "layers", "flow");
    if (!arr.is_array()) throw ConfigError("flow.layers: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      layers.push_back(layer_from_json(arr[i], n, "flow.layers[" + std::to_string(i) + "]"));
    }
  }
  return ManifoldDensity(base, FlowChain(n, std::move(layers)), chart, direction);
}

inline json model_to_json(const ManifoldDensity& md) {
  json layers = json::array();
  for (const auto& l : md.chain().layers()) layers.push_back(layer_to_json(l));
  return {{"schema_version", kSchemaVersion},
          {"chart", chart_to_json(md.chart())},
          {"base", base_to_json(md.base())},
          {"flow",
           {{"direction", md.direction() == FlowDirection::generative ? "generative" : "normalizing"},
            {"layers", layers}}}};
}

inline json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": invalid JSON: " + e.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Optional-field fit settings; absent fields keep FitConfig defaults.
inline FitConfig fit_config_from_json(const json& j) {
  using namespace detail;
  require_object(j, "fit config");
  allow_keys(j, {"layer_count", "layer_kind", "step_size", "max_iters", "grad_tolerance", "fd_step", "seed",
                 "max_halvings"},
             "fit config");
  FitConfig cfg;
  if (j.contains("layer_count")) cfg.layer_count = static_cast<int>(get_integer(j["layer_count"], "layer_count"));
  if (j.contains("layer_kind")) cfg.layer_kind = parse_layer_kind(get_string(j, "layer_kind", "fit config"), "layer_kind");
  if (j.contains("step_size")) cfg.step_size = get_number(j["step_size"], "step_size");
  if (j.contains("max_iters")) cfg.max_iters = static_cast<int>(get_integer(j["max_iters"], "max_iters"));
  if (j.contains("grad_tolerance")) cfg.grad_tolerance = get_number(j["grad_tolerance"], "grad_tolerance");
  if (j.contains("fd_step")) cfg.fd_step = get_number(j["fd_step"], "fd_step");
  if (j.contains("seed")) cfg.rng_seed = static_cast<std::uint64_t>(get_integer(j["seed"], "seed"));
  if (j.contains("max_halvings")) cfg.max_halvings = static_cast<int>(get_integer(j["max_halvings"], "max_halvings"));
  cfg.validate();
  return cfg;
}

inline json fit_config_to_json(const FitConfig& cfg) {
  return {{"layer_count", cfg.layer_count},  {"layer_kind", to_string(cfg.layer_kind)},
          {"step_size", cfg.step_size},      {"max_iters", cfg.max_iters},
          {"grad_tolerance", cfg.grad_tolerance}, {"fd_step", cfg.fd_step},
          {"seed", cfg.rng_seed},            {"max_halvings", cfg.max_halvings}};
}

inline json fit_report_to_json(const FitReport& r) {
  json params = json::array();
  for (Eigen::Index i = 0; i < r.final_params.size(); ++i) params.push_back(r.final_params[i]);
  return {{"schema_version", kSchemaVersion},
          {"objective_trace", r.objective_trace},
          {"initial_log_likelihood", r.initial_log_likelihood},
          {"final_log_likelihood", r.final_log_likelihood},
          {"final_params", params},
          {"grad_norm_final", r.grad_norm_final},
          {"iterations_used", r.iterations_used},
          {"converged", r.converged},
          {"stop_reason", to_string(r.stop_reason)}};
}

}  // namespace manifold_flow::io
