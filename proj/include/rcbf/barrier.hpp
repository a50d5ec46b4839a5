#pragma once

// Pairwise collision-avoidance barrier functions and the ensemble
// constraint A(x) u >= b(x).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rcbf/disturbance.hpp"
#include "rcbf/dynamics.hpp"

namespace rcbf {

/// Odd polynomial alpha(h) = sum_k c_k h^(2k+1) with c_k >= 0, not all zero.
/// Odd with nonnegative coefficients makes it an extended class-K function.
struct OddPolynomial {
  std::vector<double> coeffs;  // coeffs[k] multiplies h^(2k+1)

  double operator()(double h) const {
    const double h2 = h * h;
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * h2 + *it;
    return acc * h;
  }

  void validate() const {
    bool any = false;
    for (double c : coeffs) {
      if (!(c >= 0.0) || !std::isfinite(c))
        throw std::invalid_argument("OddPolynomial: coefficients must be nonnegative and finite");
      any = any || c > 0.0;
    }
    if (!any) throw std::invalid_argument("OddPolynomial: at least one positive coefficient required");
  }
};

inline double class_k_cubic(double h, double gamma) { return gamma * h * h * h; }

struct BarrierParams {
  double delta{0.12};
  double gamma{150.0};
  /// Optional replacement for gamma*h^3.
  std::vector<double> class_k_override{};

  double alpha(double h) const {
    if (class_k_override.empty()) return class_k_cubic(h, gamma);
    return OddPolynomial{class_k_override}(h);
  }

  void validate() const {
    if (!(delta > 0.0) || !std::isfinite(delta))
      throw std::invalid_argument("BarrierParams: delta must be positive");
    if (!(gamma > 0.0) || !std::isfinite(gamma))
      throw std::invalid_argument("BarrierParams: gamma must be positive");
    if (!class_k_override.empty()) OddPolynomial{class_k_override}.validate();
  }
};

inline double pairwise_h(const Eigen::Vector2d& pi, const Eigen::Vector2d& pj,
                         const BarrierParams& params) {
  return (pi - pj).squaredNorm() - params.delta * params.delta;
}

struct PairGradient {
  Eigen::RowVector2d wrt_i;
  Eigen::RowVector2d wrt_j;
};

/// Exact gradient of ||pi - pj||^2 - delta^2, including the factor 2.
inline PairGradient pairwise_h_grad(const Eigen::Vector2d& pi, const Eigen::Vector2d& pj) {
  const Eigen::RowVector2d gi = 2.0 * (pi - pj).transpose();
  return {gi, -gi};
}

/// Support minimum of (grad_i g_i + grad_j g_j) over the hull.
inline double robust_margin(const Eigen::RowVector2d& grad_i, const Eigen::RowVector2d& grad_j,
                            const Eigen::Matrix2d& g_i, const Eigen::Matrix2d& g_j,
                            const DisturbanceHull& hull) {
  const Eigen::RowVector2d z = grad_i * g_i + grad_j * g_j;
  return support_min(z.transpose(), hull);
}

/// Per-pair quantities that do not depend on the disturbance model.
struct PairRow {
  std::size_t i;
  std::size_t j;
  double h;
  Eigen::RowVector2d a_i;  // grad_{p_i} h * g_i
  Eigen::RowVector2d a_j;  // grad_{p_j} h * g_j
};

/// Evaluates every pair i<j in (i, j) lexicographic order. Pairs whose output
/// distance exceeds prune_distance are skipped; pruning is off when
/// prune_distance is infinite.
inline std::vector<PairRow> pair_rows(std::span<const RobotState> states, const RobotGeometry& geom,
                                      const BarrierParams& params,
                                      double prune_distance = std::numeric_limits<double>::infinity()) {
  const std::size_t n = states.size();
  std::vector<Eigen::Vector2d> p(n);
  std::vector<Eigen::Matrix2d> g(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!states[k].finite()) throw std::invalid_argument("pair_rows: non-finite state");
    p[k] = output_point(states[k], geom);
    g[k] = output_jacobian(states[k], geom);
  }
  std::vector<PairRow> rows;
  rows.reserve(n * (n - (n > 0 ? 1 : 0)) / 2);
  const double prune2 = prune_distance * prune_distance;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::isfinite(prune_distance) && (p[i] - p[j]).squaredNorm() > prune2) continue;
      const PairGradient grad = pairwise_h_grad(p[i], p[j]);
      rows.push_back({i, j, pairwise_h(p[i], p[j], params), grad.wrt_i * g[i], grad.wrt_j * g[j]});
    }
  }
  return rows;
}

/// Robust margins for every (hull, pair), hull-major: out[k * P + r].
inline Eigen::VectorXd robust_margin_pass(std::span<const PairRow> rows, const HullUnion& disturbance) {
  const std::size_t q = disturbance.size();
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size() * q));
  const std::size_t n_pairs = rows.size();
  for (std::size_t r = 0; r < n_pairs; ++r) {
    const Eigen::Vector2d z = (rows[r].a_i + rows[r].a_j).transpose();
    for (std::size_t k = 0; k < q; ++k)
      out(static_cast<Eigen::Index>(k * n_pairs + r)) = support_min(z, disturbance[k]);
  }
  return out;
}

struct RowInfo {
  std::size_t i;
  std::size_t j;
  std::size_t hull;
  double h;
  double class_k;  // alpha(h)
  double margin;   // support minimum over the hull
};

/// Stacked ensemble inequality A u >= b with |u|_inf <= u_max.
struct ConstraintSet {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double u_max{std::numeric_limits<double>::infinity()};
  std::vector<RowInfo> info;

  Eigen::Index rows() const { return A.rows(); }
};

/// Builds one row per pair (i<j) per hull; b = -alpha(h) - margin. Rows are
/// grouped by hull, so a q-hull union stacks q single-hull blocks.
inline ConstraintSet assemble_constraints(std::span<const RobotState> states, const RobotGeometry& geom,
                                          const BarrierParams& params, const HullUnion& disturbance,
                                          double prune_distance = std::numeric_limits<double>::infinity()) {
  if (states.empty()) throw std::invalid_argument("assemble_constraints: at least one robot required");
  const auto pairs = pair_rows(states, geom, params, prune_distance);
  const Eigen::VectorXd margins = robust_margin_pass(pairs, disturbance);
  const std::size_t q = disturbance.size();
  const auto n_rows = static_cast<Eigen::Index>(pairs.size() * q);
  const auto width = static_cast<Eigen::Index>(2 * states.size());

  ConstraintSet cs;
  cs.A = Eigen::MatrixXd::Zero(n_rows, width);
  cs.b.resize(n_rows);
  cs.info.reserve(static_cast<std::size_t>(n_rows));
  for (std::size_t k = 0; k < q; ++k) {
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      const PairRow& pr = pairs[r];
      const double ak = params.alpha(pr.h);
      const auto row = static_cast<Eigen::Index>(k * pairs.size() + r);
      cs.A.block<1, 2>(row, static_cast<Eigen::Index>(2 * pr.i)) = pr.a_i;
      cs.A.block<1, 2>(row, static_cast<Eigen::Index>(2 * pr.j)) = pr.a_j;
      const double m = margins(row);
      cs.b(row) = -ak - m;
      cs.info.push_back({pr.i, pr.j, k, pr.h, ak, m});
    }
  }
  return cs;
}

/// Minimum of pairwise_h over all output pairs; +inf for a single robot.
inline double min_pairwise_h(std::span<const RobotState> states, const RobotGeometry& geom,
                             const BarrierParams& params) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Vector2d> p;
  p.reserve(states.size());
  for (const auto& s : states) p.push_back(output_point(s, geom));
  for (std::size_t i = 0; i + 1 < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) best = std::min(best, pairwise_h(p[i], p[j], params));
  return best;
}

}  // namespace rcbf
