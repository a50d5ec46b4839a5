#pragma once

// Closed-loop circle-swap simulation: nominal proportional controller,
// safety filter, plant disturbance realization and Euler/RK4 integration.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rcbf/barrier.hpp"
#include "rcbf/disturbance.hpp"
#include "rcbf/dynamics.hpp"
#include "rcbf/filter.hpp"

namespace rcbf {

/// worst_case applies one adversarial vertex to every robot, chosen against
/// the direction of the tightest pair certificate. worst_case_independent
/// lets each robot pick its own vertex against its own tightest pair; the
/// pair certificate assumes a disturbance common to both robots of a pair
/// and does not cover that case.
enum class PlantMode { off, uniform_convex, worst_case, worst_case_independent, vertex };

struct PlantDisturbance {
  PlantMode mode{PlantMode::worst_case};
  std::size_t vertex{0};  // index into the pooled vertex list, vertex mode only
};

struct ScenarioConfig {
  std::size_t robot_count{22};
  FilterConfig filter{};
  /// Disturbance acting on the plant. Kept separate from filter.disturbance
  /// so the filter can be made non-robust while the plant stays disturbed.
  HullUnion plant_hull{symmetric_box(5.0)};
  PlantDisturbance plant{};
  double circle_radius{0.6};
  double sim_duration{30.0};
  double dt{0.005};
  double gain{1.0};
  double goal_tolerance{0.05};
  std::uint64_t seed{1};
  std::size_t iterations{1};
  Integrator integrator{Integrator::euler};
  /// Check every realized disturbance against the plant hull.
  bool debug_checks{false};

  std::size_t step_count() const {
    // Guard against 30 / 0.005 landing just below an integer.
    return static_cast<std::size_t>(std::floor(sim_duration / dt * (1.0 + 1e-12)));
  }

  void validate() const {
    if (robot_count < 1) throw std::invalid_argument("robot_count: must be at least 1");
    filter.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("dt: must be positive");
    if (!(sim_duration > 0.0)) throw std::invalid_argument("sim_duration: must be positive");
    if (!(gain > 0.0)) throw std::invalid_argument("gain: must be positive");
    if (!(goal_tolerance > 0.0)) throw std::invalid_argument("goal_tolerance: must be positive");
    if (iterations < 1) throw std::invalid_argument("iterations: must be at least 1");
    const double min_radius = static_cast<double>(robot_count) * filter.geometry.diameter / (2.0 * std::numbers::pi);
    if (!(circle_radius > min_radius))
      throw std::invalid_argument("circle_radius: must exceed N*delta/(2*pi)");
    if (plant.mode == PlantMode::vertex && plant.vertex >= plant_hull.pooled().size())
      throw std::invalid_argument("plant_disturbance: vertex index out of range");
  }
};

struct RunMetrics {
  double dt{0.0};
  std::vector<double> t;
  std::vector<double> min_h;
  std::vector<double> wct;        // seconds per filter step
  std::vector<double> max_alter;  // max over robots of |u_star - u_nom|_inf
  double violation_time{0.0};
  double goal_completion{0.0};
  std::size_t fallback_steps{0};
  std::vector<RobotState> final_states;

  double worst_min_h() const {
    double w = std::numeric_limits<double>::infinity();
    for (double v : min_h) w = std::min(w, v);
    return w;
  }
};

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Robots evenly spaced on a circle, facing its center. The output point
/// (robot centroid) of robot i sits at angle 2*pi*i/N on the circle.
inline std::vector<RobotState> circle_init(std::size_t n, double radius, const RobotGeometry& geom,
                                           const BarrierParams& params) {
  if (n < 1) throw std::invalid_argument("circle_init: at least one robot required");
  if (!(radius > 0.0)) throw std::invalid_argument("circle_init: radius must be positive");
  std::vector<RobotState> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    const double heading = phi + std::numbers::pi;
    const double px = radius * std::cos(phi), py = radius * std::sin(phi);
    out.emplace_back(px - geom.look_ahead * std::cos(heading), py - geom.look_ahead * std::sin(heading), heading);
  }
  if (n > 1 && !(min_pairwise_h(out, geom, params) > 0.0))
    throw std::invalid_argument("circle_init: robots overlap at the requested radius");
  return out;
}

/// Proportional output controller mapped to wheels through g_i^{-1}, then
/// scaled uniformly so that |u|_inf <= u_max.
inline WheelCommand nominal_controller(const RobotState& s, const Eigen::Vector2d& goal, double gain,
                                       const RobotGeometry& geom, double u_max) {
  const Eigen::Vector2d pdot = gain * (goal - output_point(s, geom));
  Eigen::Vector2d u = output_jacobian(s, geom).partialPivLu().solve(pdot);
  const double peak = u.lpNorm<Eigen::Infinity>();
  if (peak > u_max) u *= u_max / peak;
  return WheelCommand::from(u);
}

/// Seed for iteration k of a repeated experiment; iteration 0 keeps the base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::size_t k) {
  if (k == 0) return base;
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(k);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace detail {

/// Adversarial directions from the undisturbed certificate value
/// a_i u_i + a_j u_j + alpha(h) of every pair. With `shared`, every robot gets
/// the pair direction a_i + a_j of the globally tightest pair; otherwise each
/// robot gets the direction of the tightest pair it belongs to.
inline std::vector<Eigen::Vector2d> adversarial_directions(std::span<const RobotState> states,
                                                           std::span<const WheelCommand> u,
                                                           const FilterConfig& cfg, bool shared) {
  const std::size_t n = states.size();
  std::vector<Eigen::Vector2d> dir(n, Eigen::Vector2d::Zero());
  std::vector<double> tight(n, std::numeric_limits<double>::infinity());
  double global = std::numeric_limits<double>::infinity();
  Eigen::Vector2d global_dir = Eigen::Vector2d::Zero();
  for (const PairRow& pr : pair_rows(states, cfg.geometry, cfg.barrier)) {
    const double value = pr.a_i.dot(u[pr.i].vec()) + pr.a_j.dot(u[pr.j].vec()) + cfg.barrier.alpha(pr.h);
    const Eigen::Vector2d z = (pr.a_i + pr.a_j).transpose();
    if (value < global) {
      global = value;
      global_dir = z;
    }
    for (std::size_t k : {pr.i, pr.j}) {
      if (value < tight[k]) {
        tight[k] = value;
        dir[k] = z;
      }
    }
  }
  if (shared) std::fill(dir.begin(), dir.end(), global_dir);
  return dir;
}

}  // namespace detail

/// One closed-loop run. Deterministic given cfg.seed (wall-clock aside).
inline RunMetrics run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const RobotGeometry& geom = cfg.filter.geometry;
  std::vector<RobotState> states = circle_init(cfg.robot_count, cfg.circle_radius, geom, cfg.filter.barrier);
  std::vector<Eigen::Vector2d> goals;
  for (const auto& s : states) goals.push_back(-output_point(s, geom));

  SafetyFilter filter(cfg.filter);
  std::mt19937_64 rng(cfg.seed);
  const DisturbanceHull pooled = cfg.plant_hull.pooled();
  std::uniform_int_distribution<std::size_t> pick_hull(0, cfg.plant_hull.size() - 1);

  RunMetrics m;
  m.dt = cfg.dt;
  const std::size_t steps = cfg.step_count();
  m.t.reserve(steps);
  m.min_h.reserve(steps);
  m.wct.reserve(steps);
  m.max_alter.reserve(steps);
  std::size_t violated = 0;

  std::vector<WheelCommand> u_nom(cfg.robot_count);
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t i = 0; i < states.size(); ++i)
      u_nom[i] = nominal_controller(states[i], goals[i], cfg.gain, geom, cfg.filter.u_max);

    FilterResult fr = filter.step(states, u_nom);
    if (fr.fallback_used) ++m.fallback_steps;

    m.t.push_back(static_cast<double>(k) * cfg.dt);
    m.min_h.push_back(fr.min_h);
    m.wct.push_back(fr.wall_clock);
    m.max_alter.push_back(fr.altered.empty() ? 0.0 : *std::max_element(fr.altered.begin(), fr.altered.end()));
    if (fr.min_h < 0.0) ++violated;

    std::vector<Eigen::Vector2d> dirs;
    if (cfg.plant.mode == PlantMode::worst_case || cfg.plant.mode == PlantMode::worst_case_independent)
      dirs = detail::adversarial_directions(states, fr.u_star, cfg.filter, cfg.plant.mode == PlantMode::worst_case);

    for (std::size_t i = 0; i < states.size(); ++i) {
      Eigen::Vector2d d = Eigen::Vector2d::Zero();
      switch (cfg.plant.mode) {
        case PlantMode::off: break;
        case PlantMode::worst_case:
        case PlantMode::worst_case_independent: d = sample_hull(pooled, sample::WorstCase{dirs[i]}, rng); break;
        case PlantMode::vertex: d = sample_hull(pooled, sample::VertexIndex{cfg.plant.vertex}, rng); break;
        case PlantMode::uniform_convex: d = sample_hull(cfg.plant_hull[pick_hull(rng)], sample::UniformConvex{}, rng); break;
      }
      if (cfg.debug_checks && cfg.plant.mode != PlantMode::off) {
        // d must lie in some hull of the union: check support dominance in a fan of directions.
        for (int a = 0; a < 8; ++a) {
          const double ang = std::numbers::pi * a / 4.0;
          const Eigen::Vector2d z(std::cos(ang), std::sin(ang));
          const auto mins = union_support_mins(z, cfg.plant_hull);
          const double lo = *std::min_element(mins.begin(), mins.end());
          if (z.dot(d) < lo - 1e-12) throw SimError("realized disturbance outside the plant hull");
        }
      }
      states[i] = step_dynamics(states[i], fr.u_star[i], d, cfg.dt, geom, cfg.integrator);
      if (!states[i].finite()) throw SimError("non-finite state at step " + std::to_string(k));
    }
  }
  m.violation_time = static_cast<double>(violated) * cfg.dt;

  std::size_t done = 0;
  for (std::size_t i = 0; i < states.size(); ++i)
    if ((output_point(states[i], geom) - goals[i]).norm() <= cfg.goal_tolerance) ++done;
  m.goal_completion = static_cast<double>(done) / static_cast<double>(states.size());
  m.final_states = std::move(states);
  return m;
}

struct ExperimentSummary {
  double avg_wct_ms{0.0};
  double var_wct_ms2{0.0};
  double avg_freq_hz{0.0};
  double violation_time_s{0.0};
  double goal_completion{0.0};
  double worst_min_h{std::numeric_limits<double>::infinity()};
};

/// Mean/population variance of wall-clock over every step of every run,
/// summed violation time, mean goal completion.
inline ExperimentSummary summarize(std::span<const RunMetrics> runs) {
  ExperimentSummary s;
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  for (const auto& r : runs) {
    for (double w : r.wct) {
      const double ms = w * 1e3;
      sum += ms;
      sum_sq += ms * ms;
      ++count;
    }
    s.violation_time_s += r.violation_time;
    s.goal_completion += r.goal_completion;
    s.worst_min_h = std::min(s.worst_min_h, r.worst_min_h());
  }
  if (!runs.empty()) s.goal_completion /= static_cast<double>(runs.size());
  if (count > 0) {
    s.avg_wct_ms = sum / static_cast<double>(count);
    s.var_wct_ms2 = std::max(0.0, sum_sq / static_cast<double>(count) - s.avg_wct_ms * s.avg_wct_ms);
    s.avg_freq_hz = s.avg_wct_ms > 0.0 ? 1e3 / s.avg_wct_ms : 0.0;
  }
  return s;
}

/// Runs cfg.iterations independent runs with derived seeds, up to `jobs` at a
/// time. Results are ordered by iteration index.
inline std::vector<RunMetrics> repeat_experiment(const ScenarioConfig& cfg, std::size_t jobs = 1) {
  cfg.validate();
  std::vector<RunMetrics> out(cfg.iterations);
  std::vector<std::exception_ptr> errors(cfg.iterations);
  auto run_one = [&](std::size_t k) {
    try {
      ScenarioConfig c = cfg;
      c.seed = derive_seed(cfg.seed, k);
      out[k] = run_scenario(c);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, cfg.iterations));
  if (jobs == 1) {
    for (std::size_t k = 0; k < cfg.iterations; ++k) run_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < cfg.iterations; k = next++) run_one(k);
      });
    for (auto& th : pool) th.join();
  }
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const std::exception& e) {
      throw SimError("iteration " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace rcbf
