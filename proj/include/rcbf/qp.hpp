#pragma once

// Dense strictly convex QP:
//
//   min ||W (u_nom - u)||^2   s.t.  A u >= b,  |u_k| <= u_max_k
//
// solved with the Goldfarb-Idnani dual active-set method. The dual method
// starts from the unconstrained minimizer u_nom, so it needs no feasible
// starting point and reports infeasibility when the dual step is unbounded.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rcbf {

struct QpProblem {
  Eigen::MatrixXd W;
  Eigen::VectorXd u_nom;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  /// Per-variable bound on |u_k|; +inf leaves a variable unbounded.
  Eigen::VectorXd u_max;

  QpProblem() = default;
  QpProblem(Eigen::MatrixXd W_, Eigen::VectorXd u_nom_, Eigen::MatrixXd A_, Eigen::VectorXd b_,
            double u_max_)
      : W(std::move(W_)), u_nom(std::move(u_nom_)), A(std::move(A_)), b(std::move(b_)) {
    u_max = Eigen::VectorXd::Constant(u_nom.size(), u_max_);
    validate();
  }
  QpProblem(Eigen::MatrixXd W_, Eigen::VectorXd u_nom_, Eigen::MatrixXd A_, Eigen::VectorXd b_,
            Eigen::VectorXd u_max_)
      : W(std::move(W_)), u_nom(std::move(u_nom_)), A(std::move(A_)), b(std::move(b_)),
        u_max(std::move(u_max_)) {
    validate();
  }

  Eigen::Index variables() const { return u_nom.size(); }

  void validate() const {
    const Eigen::Index m = u_nom.size();
    if (W.rows() != m || W.cols() != m) throw std::invalid_argument("QpProblem: W must be square with side len(u_nom)");
    if (A.cols() != m && A.rows() > 0) throw std::invalid_argument("QpProblem: columns of A must equal len(u_nom)");
    if (A.rows() != b.size()) throw std::invalid_argument("QpProblem: rows of A must equal len(b)");
    if (u_max.size() != m) throw std::invalid_argument("QpProblem: bound vector has wrong length");
    if (!W.allFinite() || !u_nom.allFinite() || !A.allFinite() || !b.allFinite())
      throw std::invalid_argument("QpProblem: non-finite data");
    for (Eigen::Index k = 0; k < m; ++k)
      if (std::isnan(u_max(k)) || u_max(k) < 0.0) throw std::invalid_argument("QpProblem: bounds must be nonnegative");
  }
};

struct Tolerances {
  double feasibility{1e-8};
  double stationarity{1e-8};
  /// 0 selects 10 * (variables + constraint rows).
  std::size_t max_iterations{0};
};

enum class QpStatus { optimal, infeasible, max_iterations };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iterations: return "max-iterations";
  }
  return "?";
}

struct QpSolution {
  Eigen::VectorXd u_star;
  QpStatus status{QpStatus::infeasible};
  double kkt_residual{std::numeric_limits<double>::infinity()};
  std::size_t iterations{0};
  double wall_clock{0.0};
  /// Active constraints at exit. Index k < rows(A) is a row of A; rows(A) + 2v
  /// is u_v >= -u_max_v and rows(A) + 2v + 1 is u_v <= u_max_v.
  std::vector<Eigen::Index> active;
};

/// Reusable solver. Holds the previous active set for warm starts; one
/// instance must not be shared between threads.
class QpSolver {
 public:
  void set_warm_start(std::vector<Eigen::Index> active) { hint_ = std::move(active); }
  void clear_warm_start() { hint_.clear(); }

  QpSolution solve(const QpProblem& p, const Tolerances& tol = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    QpSolution sol = run(p, tol);
    sol.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (sol.status == QpStatus::optimal) hint_ = sol.active;
    return sol;
  }

 private:
  std::vector<Eigen::Index> hint_;

  QpSolution run(const QpProblem& p, const Tolerances& tol);
};

namespace detail {

/// Normalized constraint view: rows A_k/|A_k| and box rows as unit vectors.
struct Constraints {
  Eigen::MatrixXd A;   // normalized general rows
  Eigen::VectorXd b;   // normalized rhs
  Eigen::VectorXd scale;  // |A_k|
  Eigen::VectorXd bound;
  Eigen::Index m_general{0};
  Eigen::Index n{0};

  Eigen::Index total() const { return m_general + 2 * n; }
  bool box_finite(Eigen::Index k) const { return std::isfinite(bound((k - m_general) / 2)); }

  Eigen::VectorXd normal(Eigen::Index k) const {
    if (k < m_general) return A.row(k).transpose();
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    const Eigen::Index v = (k - m_general) / 2;
    e(v) = ((k - m_general) % 2 == 0) ? 1.0 : -1.0;
    return e;
  }
  double rhs(Eigen::Index k) const {
    if (k < m_general) return b(k);
    return -bound((k - m_general) / 2);
  }
  double slack(Eigen::Index k, const Eigen::VectorXd& x) const {
    if (k < m_general) return A.row(k).dot(x) - b(k);
    const Eigen::Index v = (k - m_general) / 2;
    return ((k - m_general) % 2 == 0 ? x(v) : -x(v)) + bound(v);
  }
};

}  // namespace detail

inline QpSolution QpSolver::run(const QpProblem& p, const Tolerances& tol) {
  p.validate();
  const Eigen::Index n = p.variables();
  QpSolution sol;
  sol.u_star = p.u_nom;

  detail::Constraints cs;
  cs.n = n;
  cs.m_general = p.A.rows();
  cs.A = p.A;
  cs.b = p.b;
  cs.scale.resize(cs.m_general);
  cs.bound = p.u_max;
  std::vector<char> usable(static_cast<std::size_t>(cs.total()), 1);
  for (Eigen::Index k = 0; k < cs.m_general; ++k) {
    const double s = p.A.row(k).norm();
    cs.scale(k) = s;
    if (s > 0.0) {
      cs.A.row(k) /= s;
      cs.b(k) /= s;
    } else {
      // 0 >= b: either trivially satisfied or impossible.
      usable[static_cast<std::size_t>(k)] = 0;
      if (p.b(k) > tol.feasibility) {
        sol.status = QpStatus::infeasible;
        return sol;
      }
    }
  }
  for (Eigen::Index k = cs.m_general; k < cs.total(); ++k)
    if (!cs.box_finite(k)) usable[static_cast<std::size_t>(k)] = 0;
  if (n == 0) {
    sol.status = QpStatus::optimal;
    sol.kkt_residual = 0.0;
    return sol;
  }

  // Hessian H = W^T W scaled to unit max diagonal; the minimizer is unchanged.
  Eigen::MatrixXd H = p.W.transpose() * p.W;
  H /= H.diagonal().maxCoeff();
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("QpProblem: W is singular");
  {
    // Cheap estimate of cond(W) from the Cholesky diagonal.
    const Eigen::VectorXd ld = Eigen::MatrixXd(llt.matrixL()).diagonal().cwiseAbs();
    if (!(ld.minCoeff() > 0.0)) throw std::invalid_argument("QpProblem: W is singular");
    if (ld.maxCoeff() / ld.minCoeff() > 1e8) std::cerr << "warning: QpProblem weight condition number above 1e8\n";
  }
  // J = L^{-T}, so J J^T = H^{-1}.
  Eigen::MatrixXd J = llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd x = p.u_nom;

  std::vector<Eigen::Index> active;
  std::vector<double> mult;
  std::vector<char> is_active(static_cast<std::size_t>(cs.total()), 0);
  double r_norm = 1.0;
  const double eps = std::numeric_limits<double>::epsilon();

  const std::size_t max_iter =
      tol.max_iterations ? tol.max_iterations : static_cast<std::size_t>(10 * (n + cs.total()));
  std::size_t iter = 0;

  std::vector<char> hinted(static_cast<std::size_t>(cs.total()), 0);
  for (Eigen::Index k : hint_)
    if (k >= 0 && k < cs.total()) hinted[static_cast<std::size_t>(k)] = 1;

  auto violation_threshold = [&](Eigen::Index k) {
    return 1e-2 * tol.feasibility * std::max(1.0, std::abs(cs.rhs(k)));
  };

  auto add_constraint = [&](Eigen::VectorXd& d) -> bool {
    const Eigen::Index q = static_cast<Eigen::Index>(active.size());
    for (Eigen::Index j = n - 1; j >= q + 1; --j) {
      double c = d(j - 1), s = d(j);
      const double h = std::hypot(c, s);
      if (h == 0.0) continue;
      c /= h;
      s /= h;
      d(j - 1) = h;
      d(j) = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double t1 = J(k, j - 1), t2 = J(k, j);
        J(k, j - 1) = c * t1 + s * t2;
        J(k, j) = s * t1 - c * t2;
      }
    }
    if (std::abs(d(q)) <= eps * r_norm) return false;
    R.col(q).head(q + 1) = d.head(q + 1);
    r_norm = std::max(r_norm, std::abs(d(q)));
    return true;
  };

  auto drop_constraint = [&](std::size_t l) {
    const Eigen::Index q = static_cast<Eigen::Index>(active.size());
    is_active[static_cast<std::size_t>(active[l])] = 0;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(l));
    mult.erase(mult.begin() + static_cast<std::ptrdiff_t>(l));
    const auto li = static_cast<Eigen::Index>(l);
    for (Eigen::Index j = li; j < q - 1; ++j) R.col(j) = R.col(j + 1);
    R.col(q - 1).setZero();
    const Eigen::Index qn = q - 1;
    // Restore upper-triangular form; the shift left one subdiagonal entry per column.
    for (Eigen::Index j = li; j < qn; ++j) {
      double c = R(j, j), s = R(j + 1, j);
      const double h = std::hypot(c, s);
      if (h == 0.0) continue;
      c /= h;
      s /= h;
      R(j, j) = h;
      R(j + 1, j) = 0.0;
      for (Eigen::Index k = j + 1; k < qn; ++k) {
        const double t1 = R(j, k), t2 = R(j + 1, k);
        R(j, k) = c * t1 + s * t2;
        R(j + 1, k) = s * t1 - c * t2;
      }
      for (Eigen::Index k = 0; k < n; ++k) {
        const double t1 = J(k, j), t2 = J(k, j + 1);
        J(k, j) = c * t1 + s * t2;
        J(k, j + 1) = s * t1 - c * t2;
      }
    }
  };

  Eigen::VectorXd general_slack(cs.m_general);
  for (;;) {
    // Step 1: pick the most violated inactive constraint, hinted ones first.
    if (cs.m_general > 0) general_slack.noalias() = cs.A * x - cs.b;
    Eigen::Index pick = -1, pick_hint = -1;
    double worst = 0.0, worst_hint = 0.0;
    for (Eigen::Index k = 0; k < cs.total(); ++k) {
      const auto ku = static_cast<std::size_t>(k);
      if (!usable[ku] || is_active[ku]) continue;
      const double s = k < cs.m_general ? general_slack(k) : cs.slack(k, x);
      if (s >= -violation_threshold(k)) continue;
      if (s < worst) {
        worst = s;
        pick = k;
      }
      if (hinted[ku] && s < worst_hint) {
        worst_hint = s;
        pick_hint = k;
      }
    }
    if (pick_hint >= 0) pick = pick_hint;
    if (pick < 0) {
      sol.status = QpStatus::optimal;
      break;
    }

    const Eigen::VectorXd np = cs.normal(pick);
    double u_plus = 0.0;
    bool added = false;
    while (!added) {
      if (++iter > max_iter) {
        sol.status = QpStatus::max_iterations;
        break;
      }
      const Eigen::Index q = static_cast<Eigen::Index>(active.size());
      Eigen::VectorXd d = J.transpose() * np;
      const Eigen::VectorXd z = J.rightCols(n - q) * d.tail(n - q);
      Eigen::VectorXd r(q);
      if (q > 0) r = R.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));

      // Partial (dual) step length: first active multiplier to reach zero.
      double t1 = std::numeric_limits<double>::infinity();
      std::size_t drop = 0;
      for (Eigen::Index k = 0; k < q; ++k) {
        if (r(k) > 0.0) {
          const double ratio = mult[static_cast<std::size_t>(k)] / r(k);
          if (ratio < t1) {
            t1 = ratio;
            drop = static_cast<std::size_t>(k);
          }
        }
      }
      // Full (primal) step length.
      double t2 = std::numeric_limits<double>::infinity();
      const double zn = z.dot(np);
      if (zn > 1e3 * eps) t2 = -cs.slack(pick, x) / zn;
      const double t = std::min(t1, t2);

      if (!std::isfinite(t)) {
        sol.status = QpStatus::infeasible;
        sol.u_star = x;
        sol.iterations = iter;
        return sol;
      }
      for (Eigen::Index k = 0; k < q; ++k) mult[static_cast<std::size_t>(k)] -= t * r(k);
      u_plus += t;
      if (std::isfinite(t2)) x += t * z;

      if (t2 <= t1) {
        if (!add_constraint(d)) {
          // Numerically dependent on the active set; treat as a dual step.
          sol.status = QpStatus::infeasible;
          sol.u_star = x;
          sol.iterations = iter;
          return sol;
        }
        active.push_back(pick);
        mult.push_back(u_plus);
        is_active[static_cast<std::size_t>(pick)] = 1;
        added = true;
      } else {
        drop_constraint(drop);
      }
    }
    if (sol.status == QpStatus::max_iterations) break;
  }

  sol.u_star = x;
  sol.iterations = iter;
  sol.active = active;

  // Stationarity in the normalized problem: H (x - u_nom) = sum mult_k n_k.
  Eigen::VectorXd grad = H * (x - p.u_nom);
  const double gscale = std::max(1.0, std::max(grad.lpNorm<Eigen::Infinity>(), p.u_nom.lpNorm<Eigen::Infinity>()));
  for (std::size_t k = 0; k < active.size(); ++k) grad -= mult[k] * cs.normal(active[k]);
  sol.kkt_residual = grad.lpNorm<Eigen::Infinity>() / gscale;

  if (sol.status == QpStatus::optimal) {
    double viol = 0.0;
    for (Eigen::Index k = 0; k < p.A.rows(); ++k) viol = std::max(viol, p.b(k) - p.A.row(k).dot(x));
    for (Eigen::Index v = 0; v < n; ++v) viol = std::max(viol, std::abs(x(v)) - p.u_max(v));
    if (viol > tol.feasibility || sol.kkt_residual > tol.stationarity) sol.status = QpStatus::max_iterations;
  }
  return sol;
}

inline QpSolution solve(const QpProblem& p, const Tolerances& tol = {}) {
  QpSolver s;
  return s.solve(p, tol);
}

/// Nonnegative least squares min |M x - y| s.t. x >= 0 (Lawson-Hanson).
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& M, const Eigen::VectorXd& y, std::size_t max_iter = 0) {
  const Eigen::Index n = M.cols();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (n == 0) return x;
  if (max_iter == 0) max_iter = static_cast<std::size_t>(30 * n + 30);
  std::vector<char> passive(static_cast<std::size_t>(n), 0);
  const double tol = 1e-12 * std::max(1.0, M.lpNorm<Eigen::Infinity>() * std::max(1.0, y.lpNorm<Eigen::Infinity>()));

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index k = 0; k < n; ++k)
      if (passive[static_cast<std::size_t>(k)]) idx.push_back(k);
    z.setZero(n);
    if (idx.empty()) return;
    Eigen::MatrixXd Mp(M.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) Mp.col(static_cast<Eigen::Index>(c)) = M.col(idx[c]);
    const Eigen::VectorXd zp = Mp.completeOrthogonalDecomposition().solve(y);
    for (std::size_t c = 0; c < idx.size(); ++c) z(idx[c]) = zp(static_cast<Eigen::Index>(c));
  };

  for (std::size_t outer = 0; outer < max_iter; ++outer) {
    const Eigen::VectorXd w = M.transpose() * (y - M * x);
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index k = 0; k < n; ++k)
      if (!passive[static_cast<std::size_t>(k)] && w(k) > best_w) {
        best_w = w(k);
        best = k;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = 1;
    for (std::size_t inner = 0; inner < max_iter; ++inner) {
      Eigen::VectorXd z;
      solve_passive(z);
      bool ok = true;
      for (Eigen::Index k = 0; k < n; ++k)
        if (passive[static_cast<std::size_t>(k)] && z(k) <= 0.0) ok = false;
      if (ok) {
        x = z;
        break;
      }
      double alpha = 1.0;
      for (Eigen::Index k = 0; k < n; ++k)
        if (passive[static_cast<std::size_t>(k)] && z(k) <= 0.0) alpha = std::min(alpha, x(k) / (x(k) - z(k)));
      x += alpha * (z - x);
      for (Eigen::Index k = 0; k < n; ++k)
        if (passive[static_cast<std::size_t>(k)] && x(k) <= tol) {
          passive[static_cast<std::size_t>(k)] = 0;
          x(k) = 0.0;
        }
    }
  }
  return x;
}

struct KktResiduals {
  double stationarity;
  double feasibility;
  double complementarity;
};

/// First-order optimality residuals at u, independent of any solver state.
/// Multipliers for constraints within an activity tolerance of u are
/// recovered by NNLS. Stationarity and complementarity are normalized by the
/// objective scale max|2 W^T W| * max(1, |u_nom|_inf); feasibility is the raw
/// worst violation.
inline KktResiduals kkt_check(const QpProblem& p, const Eigen::VectorXd& u) {
  const Eigen::Index n = p.variables();
  if (u.size() != n) throw std::invalid_argument("kkt_check: dimension mismatch");
  const Eigen::MatrixXd H = 2.0 * p.W.transpose() * p.W;
  const Eigen::VectorXd grad = H * (u - p.u_nom);
  const double scale = std::max(H.lpNorm<Eigen::Infinity>(), std::numeric_limits<double>::min()) *
                       std::max(1.0, p.u_nom.lpNorm<Eigen::Infinity>());
  const double ux = std::max(1.0, u.lpNorm<Eigen::Infinity>());

  double feas = 0.0;
  std::vector<Eigen::VectorXd> normals;
  std::vector<double> slacks;
  for (Eigen::Index k = 0; k < p.A.rows(); ++k) {
    const double s = p.A.row(k).dot(u) - p.b(k);
    feas = std::max(feas, -s);
    const double act = 1e-7 * (p.A.row(k).lpNorm<1>() * ux + std::abs(p.b(k)) + 1e-300);
    if (s <= act && p.A.row(k).squaredNorm() > 0.0) {
      normals.push_back(p.A.row(k).transpose());
      slacks.push_back(s);
    }
  }
  for (Eigen::Index v = 0; v < n; ++v) {
    if (!std::isfinite(p.u_max(v))) continue;
    feas = std::max(feas, std::abs(u(v)) - p.u_max(v));
    const double act = 1e-7 * std::max(1.0, p.u_max(v));
    for (int sign : {1, -1}) {
      const double s = sign * u(v) + p.u_max(v);
      if (s <= act) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
        e(v) = sign;
        normals.push_back(e);
        slacks.push_back(s);
      }
    }
  }

  Eigen::MatrixXd M(n, static_cast<Eigen::Index>(normals.size()));
  for (std::size_t c = 0; c < normals.size(); ++c) M.col(static_cast<Eigen::Index>(c)) = normals[c];
  const Eigen::VectorXd lambda = nnls(M, grad);
  const Eigen::VectorXd resid = grad - M * lambda;
  double comp = 0.0;
  for (std::size_t c = 0; c < slacks.size(); ++c)
    comp = std::max(comp, lambda(static_cast<Eigen::Index>(c)) * std::abs(slacks[c]));
  return {resid.lpNorm<Eigen::Infinity>() / scale, feas, comp / scale};
}

}  // namespace rcbf
