#pragma once

// Scenario files: YAML with sections robots, barrier, disturbance, sim and
// filter. Every key is optional except robots.count and sim.duration; missing
// keys take the GRITSbot defaults. Unknown keys are errors.
//
// Requires yaml-cpp.

#include <cmath>
#include <cstdint>
#include <limits>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "rcbf/sim.hpp"

namespace rcbf {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what, int line = -1, int column = -1)
      : std::runtime_error(format(field, what, line, column)), field_(field), line_(line), column_(column) {}

  const std::string& field() const { return field_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string field_;
  int line_;
  int column_;

  static std::string format(const std::string& field, const std::string& what, int line, int column) {
    std::string s;
    if (line >= 0) s += "line " + std::to_string(line + 1) + ", column " + std::to_string(column + 1) + ": ";
    if (!field.empty()) s += field + ": ";
    return s + what;
  }
};

namespace detail {

inline ConfigError node_error(const YAML::Node& n, const std::string& field, const std::string& what) {
  const YAML::Mark m = n.Mark();
  return ConfigError(field, what, m.line, m.column);
}

inline void check_keys(const YAML::Node& section, const std::string& name, const std::set<std::string>& allowed) {
  if (!section.IsMap()) throw node_error(section, name, "expected a mapping");
  for (const auto& kv : section) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw node_error(kv.first, name + "." + key, "unknown key");
  }
}

template <class T>
T read(const YAML::Node& section, const std::string& section_name, const char* key, T fallback) {
  const YAML::Node n = section[key];
  if (!n) return fallback;
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw node_error(n, section_name + "." + key, "wrong value type");
  }
}

inline double positive(const YAML::Node& section, const std::string& section_name, const char* key, double fallback) {
  const double v = read<double>(section, section_name, key, fallback);
  if (!(v > 0.0) || !std::isfinite(v)) {
    const YAML::Node n = section[key];
    if (n) throw node_error(n, section_name + "." + key, "must be positive and finite");
    throw ConfigError(section_name + "." + key, "must be positive and finite");
  }
  return v;
}

inline PlantDisturbance parse_plant(const YAML::Node& n, const std::string& text) {
  if (text == "off") return {PlantMode::off, 0};
  if (text == "uniform-convex") return {PlantMode::uniform_convex, 0};
  if (text == "worst-case") return {PlantMode::worst_case, 0};
  if (text == "worst-case-independent") return {PlantMode::worst_case_independent, 0};
  if (text.rfind("vertex:", 0) == 0) {
    try {
      std::size_t used = 0;
      const long k = std::stol(text.substr(7), &used);
      if (k >= 0 && used == text.size() - 7) return {PlantMode::vertex, static_cast<std::size_t>(k)};
    } catch (const std::exception&) {
    }
  }
  throw node_error(n, "sim.plant_disturbance",
                   "expected off, uniform-convex, worst-case, worst-case-independent or vertex:<k>");
}

inline HullUnion parse_disturbance(const YAML::Node& sec) {
  check_keys(sec, "disturbance", {"psi", "hulls"});
  if (sec["psi"] && sec["hulls"]) throw node_error(sec, "disturbance", "give either psi or hulls, not both");
  if (sec["hulls"]) {
    const YAML::Node hulls = sec["hulls"];
    if (!hulls.IsSequence() || hulls.size() == 0) throw node_error(hulls, "disturbance.hulls", "expected a non-empty list of hulls");
    std::vector<DisturbanceHull> out;
    for (std::size_t h = 0; h < hulls.size(); ++h) {
      const YAML::Node verts = hulls[h];
      const std::string field = "disturbance.hulls[" + std::to_string(h) + "]";
      if (!verts.IsSequence() || verts.size() == 0) throw node_error(verts, field, "expected a non-empty list of [x, y] vertices");
      VertexList vl;
      for (const auto& v : verts) {
        if (!v.IsSequence() || v.size() != 2) throw node_error(v, field, "vertex must be [x, y]");
        try {
          const Vertex p(v[0].as<double>(), v[1].as<double>());
          if (!p.allFinite()) throw node_error(v, field, "vertex must be finite");
          vl.push_back(p);
        } catch (const YAML::Exception&) {
          throw node_error(v, field, "vertex must be numeric");
        }
      }
      out.emplace_back(std::move(vl));
    }
    return HullUnion(std::move(out));
  }
  const double psi = read<double>(sec, "disturbance", "psi", 5.0);
  if (!(psi >= 0.0) || !std::isfinite(psi)) throw node_error(sec["psi"], "disturbance.psi", "must be nonnegative");
  return symmetric_box(psi);
}

}  // namespace detail

/// Parses a scenario document. Errors carry the field name and, where the
/// offending node is known, its line and column.
inline ScenarioConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", e.msg, e.mark.line, e.mark.column);
  }
  if (!root || root.IsNull()) throw ConfigError("", "empty scenario file");
  detail::check_keys(root, "scenario", {"robots", "barrier", "disturbance", "sim", "filter"});

  ScenarioConfig cfg;
  const YAML::Node empty = YAML::Load("{}");

  const YAML::Node robots = root["robots"];
  if (!robots) throw ConfigError("robots.count", "required");
  detail::check_keys(robots, "robots", {"count", "wheel_radius", "base_length", "look_ahead"});
  if (!robots["count"]) throw detail::node_error(robots, "robots.count", "required");
  const long count = detail::read<long>(robots, "robots", "count", 0);
  if (count < 1) throw detail::node_error(robots["count"], "robots.count", "must be at least 1");
  cfg.robot_count = static_cast<std::size_t>(count);
  auto& geom = cfg.filter.geometry;
  geom.wheel_radius = detail::positive(robots, "robots", "wheel_radius", geom.wheel_radius);
  geom.base_length = detail::positive(robots, "robots", "base_length", geom.base_length);
  geom.look_ahead = detail::positive(robots, "robots", "look_ahead", geom.look_ahead);

  const YAML::Node barrier = root["barrier"] ? root["barrier"] : empty;
  detail::check_keys(barrier, "barrier", {"delta", "gamma", "class_k"});
  cfg.filter.barrier.delta = detail::positive(barrier, "barrier", "delta", cfg.filter.barrier.delta);
  cfg.filter.barrier.gamma = detail::positive(barrier, "barrier", "gamma", cfg.filter.barrier.gamma);
  if (barrier["class_k"]) {
    cfg.filter.barrier.class_k_override = detail::read<std::vector<double>>(barrier, "barrier", "class_k", {});
    try {
      OddPolynomial{cfg.filter.barrier.class_k_override}.validate();
    } catch (const std::invalid_argument& e) {
      throw detail::node_error(barrier["class_k"], "barrier.class_k", e.what());
    }
  }
  geom.diameter = cfg.filter.barrier.delta;

  const YAML::Node dist = root["disturbance"] ? root["disturbance"] : empty;
  cfg.filter.disturbance = detail::parse_disturbance(dist);
  cfg.plant_hull = cfg.filter.disturbance;

  const YAML::Node sim = root["sim"];
  if (!sim) throw ConfigError("sim.duration", "required");
  detail::check_keys(sim, "sim", {"dt", "duration", "radius", "seed", "iterations", "plant_disturbance", "gain",
                                  "goal_tolerance", "integrator"});
  if (!sim["duration"]) throw detail::node_error(sim, "sim.duration", "required");
  cfg.dt = detail::positive(sim, "sim", "dt", cfg.dt);
  cfg.sim_duration = detail::positive(sim, "sim", "duration", cfg.sim_duration);
  cfg.circle_radius = detail::positive(sim, "sim", "radius", cfg.circle_radius);
  cfg.gain = detail::positive(sim, "sim", "gain", cfg.gain);
  cfg.goal_tolerance = detail::positive(sim, "sim", "goal_tolerance", cfg.goal_tolerance);
  cfg.seed = detail::read<std::uint64_t>(sim, "sim", "seed", cfg.seed);
  const long iters = detail::read<long>(sim, "sim", "iterations", 1);
  if (iters < 1) throw detail::node_error(sim["iterations"], "sim.iterations", "must be at least 1");
  cfg.iterations = static_cast<std::size_t>(iters);
  if (sim["plant_disturbance"])
    cfg.plant = detail::parse_plant(sim["plant_disturbance"], detail::read<std::string>(sim, "sim", "plant_disturbance", ""));
  const auto integ = detail::read<std::string>(sim, "sim", "integrator", "euler");
  if (integ == "euler") cfg.integrator = Integrator::euler;
  else if (integ == "rk4") cfg.integrator = Integrator::rk4;
  else throw detail::node_error(sim["integrator"], "sim.integrator", "expected euler or rk4");

  const YAML::Node filter = root["filter"] ? root["filter"] : empty;
  detail::check_keys(filter, "filter", {"u_max", "fallback", "slack_weight", "prune_distance"});
  cfg.filter.u_max = detail::positive(filter, "filter", "u_max", cfg.filter.u_max);
  const auto fb = detail::read<std::string>(filter, "filter", "fallback", "slack");
  if (fb == "error") cfg.filter.fallback.kind = FallbackKind::error;
  else if (fb == "zero-input") cfg.filter.fallback.kind = FallbackKind::zero_input;
  else if (fb == "slack") cfg.filter.fallback.kind = FallbackKind::slack;
  else throw detail::node_error(filter["fallback"], "filter.fallback", "expected error, zero-input or slack");
  cfg.filter.fallback.slack_weight = detail::positive(filter, "filter", "slack_weight", cfg.filter.fallback.slack_weight);
  if (filter["prune_distance"])
    cfg.filter.prune_distance = detail::positive(filter, "filter", "prune_distance", 0.0);

  if (cfg.plant.mode == PlantMode::vertex && cfg.plant.vertex >= cfg.plant_hull.pooled().size())
    throw detail::node_error(sim["plant_disturbance"], "sim.plant_disturbance", "vertex index out of range");
  const double min_radius = static_cast<double>(cfg.robot_count) * geom.diameter / (2.0 * std::numbers::pi);
  if (!(cfg.circle_radius > min_radius))
    throw ConfigError("sim.radius", "must exceed robots.count * barrier.delta / (2 pi) = " + std::to_string(min_radius));
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", e.what());
  }
  return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::string text;
  {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open scenario file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_config(text);
}

/// Same scenario with every filter hull collapsed to the origin (psi = 0).
/// The plant disturbance is left untouched.
inline ScenarioConfig make_non_robust(ScenarioConfig cfg) {
  std::vector<DisturbanceHull> zero(cfg.filter.disturbance.size(), symmetric_box(0.0));
  cfg.filter.disturbance = HullUnion(std::move(zero));
  return cfg;
}

}  // namespace rcbf
