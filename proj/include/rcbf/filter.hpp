#pragma once

// Robust safety filter: per control step, solve
//
//   min ||L_c G_c (u_nom - u)||^2  s.t.  A(x) u >= b(x),  |u|_inf <= u_max
//
// and fall back according to policy when the program is infeasible.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rcbf/barrier.hpp"
#include "rcbf/disturbance.hpp"
#include "rcbf/dynamics.hpp"
#include "rcbf/qp.hpp"

namespace rcbf {

enum class FallbackKind { error, zero_input, slack };

struct Fallback {
  FallbackKind kind{FallbackKind::slack};
  /// Penalty on squared barrier-row slack, relative to the largest diagonal
  /// entry of the input weight W^T W.
  double slack_weight{1e6};
};

struct FilterConfig {
  RobotGeometry geometry{};
  BarrierParams barrier{};
  HullUnion disturbance{symmetric_box(5.0)};
  double u_max{25.0};
  Fallback fallback{};
  double prune_distance{std::numeric_limits<double>::infinity()};
  Tolerances tolerances{};

  void validate() const {
    geometry.validate();
    barrier.validate();
    if (!(u_max > 0.0)) throw std::invalid_argument("FilterConfig: u_max must be positive");
    if (fallback.kind == FallbackKind::slack && !(fallback.slack_weight > 0.0))
      throw std::invalid_argument("FilterConfig: slack weight must be positive");
    if (!(prune_distance > 0.0)) throw std::invalid_argument("FilterConfig: prune_distance must be positive");
  }
};

struct FilterResult {
  std::vector<WheelCommand> u_star;
  std::vector<double> altered;  // per robot max |u_star - u_nom|
  double min_h{std::numeric_limits<double>::infinity()};
  QpSolution solver;
  bool fallback_used{false};
  double wall_clock{0.0};  // constraint assembly + QP solve, seconds
  ConstraintSet constraints;
};

class FilterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// L_c G_c = I_N (x) (diag(1, l_p) G).
inline Eigen::MatrixXd ensemble_weight(std::size_t n, const RobotGeometry& geom) {
  if (n == 0) throw std::invalid_argument("ensemble_weight: at least one robot required");
  const Eigen::Matrix2d block = body_output_matrix(geom);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), static_cast<Eigen::Index>(2 * n));
  for (std::size_t k = 0; k < n; ++k) W.block<2, 2>(static_cast<Eigen::Index>(2 * k), static_cast<Eigen::Index>(2 * k)) = block;
  return W;
}

inline Eigen::VectorXd stack(std::span<const WheelCommand> u) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(2 * u.size()));
  for (std::size_t k = 0; k < u.size(); ++k) v.segment<2>(static_cast<Eigen::Index>(2 * k)) = u[k].vec();
  return v;
}

inline std::vector<WheelCommand> unstack(const Eigen::VectorXd& v, std::size_t n) {
  std::vector<WheelCommand> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = WheelCommand::from(v.segment<2>(static_cast<Eigen::Index>(2 * k)));
  return out;
}

struct CertificateCheck {
  bool holds;
  double worst_margin;  // min over rows of A u - b; +inf with no rows
};

/// Evaluates the robust barrier certificate row by row at the given inputs.
inline CertificateCheck certificate_holds(std::span<const RobotState> states, std::span<const WheelCommand> u,
                                          const FilterConfig& cfg) {
  if (states.size() != u.size()) throw std::invalid_argument("certificate_holds: size mismatch");
  const ConstraintSet cs = assemble_constraints(states, cfg.geometry, cfg.barrier, cfg.disturbance, cfg.prune_distance);
  if (cs.rows() == 0) return {true, std::numeric_limits<double>::infinity()};
  const double worst = (cs.A * stack(u) - cs.b).minCoeff();
  return {worst >= -1e-9, worst};
}

/// Stateful wrapper so the QP solver can warm start from the previous step.
class SafetyFilter {
 public:
  explicit SafetyFilter(FilterConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const FilterConfig& config() const { return cfg_; }

  FilterResult step(std::span<const RobotState> states, std::span<const WheelCommand> u_nom) {
    const std::size_t n = states.size();
    if (n == 0 || u_nom.size() != n) throw std::invalid_argument("filter_step: states and u_nom must have equal nonzero length");
    for (const auto& s : states)
      if (!s.finite()) throw std::invalid_argument("filter_step: non-finite state");
    for (const auto& u : u_nom)
      if (!std::isfinite(u.omega_r) || !std::isfinite(u.omega_l)) throw std::invalid_argument("filter_step: non-finite u_nom");

    FilterResult res;
    const auto t0 = std::chrono::steady_clock::now();
    res.constraints = assemble_constraints(states, cfg_.geometry, cfg_.barrier, cfg_.disturbance, cfg_.prune_distance);
    res.constraints.u_max = cfg_.u_max;
    const Eigen::VectorXd nominal = stack(u_nom);
    if (W_.rows() != static_cast<Eigen::Index>(2 * n)) W_ = ensemble_weight(n, cfg_.geometry);

    const QpProblem problem(W_, nominal, res.constraints.A, res.constraints.b, cfg_.u_max);
    res.solver = solver_.solve(problem, cfg_.tolerances);
    Eigen::VectorXd u = res.solver.u_star;

    if (res.solver.status != QpStatus::optimal) {
      res.fallback_used = true;
      switch (cfg_.fallback.kind) {
        case FallbackKind::error:
          throw FilterError(std::string("filter_step: QP ") + to_string(res.solver.status));
        case FallbackKind::zero_input:
          u = Eigen::VectorXd::Zero(nominal.size());
          break;
        case FallbackKind::slack: {
          res.solver = solve_with_slack(problem);
          if (res.solver.status != QpStatus::optimal)
            throw FilterError(std::string("filter_step: slack QP ") + to_string(res.solver.status));
          u = res.solver.u_star.head(nominal.size());
          res.solver.u_star = u;
          break;
        }
      }
    }
    res.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    res.u_star = unstack(u, n);
    res.altered.resize(n);
    for (std::size_t k = 0; k < n; ++k)
      res.altered[k] = (u.segment<2>(static_cast<Eigen::Index>(2 * k)) - nominal.segment<2>(static_cast<Eigen::Index>(2 * k)))
                           .lpNorm<Eigen::Infinity>();
    res.min_h = min_pairwise_h(states, cfg_.geometry, cfg_.barrier);
    return res;
  }

 private:
  FilterConfig cfg_;
  QpSolver solver_;
  QpSolver slack_solver_;
  Eigen::MatrixXd W_;

  /// Barrier rows become A u + s >= b with s penalized; box rows stay hard.
  QpSolution solve_with_slack(const QpProblem& p) {
    const Eigen::Index m = p.variables();
    const Eigen::Index r = p.A.rows();
    const double w = std::sqrt(cfg_.fallback.slack_weight * (p.W.transpose() * p.W).diagonal().maxCoeff());
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m + r, m + r);
    W.topLeftCorner(m, m) = p.W;
    W.bottomRightCorner(r, r) = w * Eigen::MatrixXd::Identity(r, r);
    Eigen::VectorXd nominal = Eigen::VectorXd::Zero(m + r);
    nominal.head(m) = p.u_nom;
    Eigen::MatrixXd A(r, m + r);
    A << p.A, Eigen::MatrixXd::Identity(r, r);
    Eigen::VectorXd bound = Eigen::VectorXd::Constant(m + r, std::numeric_limits<double>::infinity());
    bound.head(m) = p.u_max;
    return slack_solver_.solve(QpProblem(W, nominal, A, p.b, bound), cfg_.tolerances);
  }
};

inline FilterResult filter_step(std::span<const RobotState> states, std::span<const WheelCommand> u_nom,
                                const FilterConfig& cfg) {
  SafetyFilter f(cfg);
  return f.step(states, u_nom);
}

}  // namespace rcbf
