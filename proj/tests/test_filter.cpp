#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "rcbf/filter.hpp"
#include "rcbf/sim.hpp"

using namespace rcbf;
using std::numbers::pi;

namespace {

FilterConfig strict_config(double psi = 5.0) {
  FilterConfig cfg;
  cfg.disturbance = symmetric_box(psi);
  cfg.fallback.kind = FallbackKind::error;
  return cfg;
}

/// Two robots whose output points sit exactly delta apart, facing each other.
std::vector<RobotState> head_on_contact(const RobotGeometry& geom) {
  const double half = geom.diameter / 2.0;
  return {RobotState(-half - geom.look_ahead, 0.0, 0.0), RobotState(half + geom.look_ahead, 0.0, pi)};
}

}  // namespace

TEST(Filter, EnsembleWeightBlock) {
  const RobotGeometry geom;
  const Eigen::MatrixXd W1 = ensemble_weight(1, geom);
  EXPECT_EQ(W1, Eigen::MatrixXd(body_output_matrix(geom)));
  EXPECT_NEAR(W1(0, 0), 0.008, 1e-15);
  EXPECT_NEAR(W1(0, 1), 0.008, 1e-15);
  EXPECT_NEAR(W1(1, 0), -0.0045714, 1e-7);
  EXPECT_NEAR(W1(1, 1), 0.0045714, 1e-7);
  const Eigen::MatrixXd W3 = ensemble_weight(3, geom);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const Eigen::Matrix2d blk = W3.block<2, 2>(2 * a, 2 * b);
      if (a == b) EXPECT_EQ(blk, Eigen::Matrix2d(W1));
      else EXPECT_TRUE(blk.isZero(0.0));
    }
}

TEST(Filter, FarApartKeepsNominal) {
  const FilterConfig cfg = strict_config();
  const std::vector<RobotState> states{RobotState(-1.5, 0, 0), RobotState(1.5, 0, pi)};
  const std::vector<WheelCommand> u_nom{{3.0, 2.0}, {-1.0, 4.0}};
  const FilterResult r = filter_step(states, u_nom, cfg);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(r.u_star[k].omega_r, u_nom[k].omega_r, 1e-6);
    EXPECT_NEAR(r.u_star[k].omega_l, u_nom[k].omega_l, 1e-6);
  }
  EXPECT_FALSE(r.fallback_used);
}

TEST(Filter, HeadOnContactIsAltered) {
  const FilterConfig cfg = strict_config();
  const auto states = head_on_contact(cfg.geometry);
  EXPECT_NEAR(min_pairwise_h(states, cfg.geometry, cfg.barrier), 0.0, 1e-15);
  const std::vector<WheelCommand> u_nom{{25.0, 25.0}, {25.0, 25.0}};
  EXPECT_FALSE(certificate_holds(states, u_nom, cfg).holds);
  EXPECT_LT(certificate_holds(states, u_nom, cfg).worst_margin, 0.0);

  const FilterResult r = filter_step(states, u_nom, cfg);
  ASSERT_EQ(r.solver.status, QpStatus::optimal);
  EXPECT_GT((stack(r.u_star) - stack(u_nom)).norm(), 1.0);
  EXPECT_GE((r.constraints.A * stack(r.u_star) - r.constraints.b).minCoeff(), -1e-8);
  const QpProblem p(ensemble_weight(2, cfg.geometry), stack(u_nom), r.constraints.A, r.constraints.b, cfg.u_max);
  const KktResiduals kkt = kkt_check(p, stack(r.u_star));
  EXPECT_LE(std::max({kkt.stationarity, kkt.feasibility, kkt.complementarity}), 1e-6);
}

TEST(Filter, CircleStartIsOptimal) {
  const FilterConfig cfg = strict_config();
  const auto states = circle_init(22, 0.6, cfg.geometry, cfg.barrier);
  std::vector<WheelCommand> u_nom;
  for (const auto& s : states) u_nom.push_back(nominal_controller(s, -output_point(s, cfg.geometry), 1.0, cfg.geometry, cfg.u_max));
  const FilterResult r = filter_step(states, u_nom, cfg);
  EXPECT_EQ(r.constraints.rows(), 231);
  EXPECT_EQ(r.constraints.A.cols(), 44);
  ASSERT_EQ(r.solver.status, QpStatus::optimal);
  EXPECT_GE((r.constraints.A * stack(r.u_star) - r.constraints.b).minCoeff(), -1e-8);
  EXPECT_LE(stack(r.u_star).lpNorm<Eigen::Infinity>(), cfg.u_max + 1e-10);
}

TEST(Filter, CertificateClosure) {
  const FilterConfig cfg = strict_config();
  std::mt19937_64 rng(201);
  std::uniform_real_distribution<double> pos(-0.4, 0.4), ang(-pi, pi), wheel(-25.0, 25.0);
  int checked = 0;
  while (checked < 50) {
    std::vector<RobotState> states;
    for (int k = 0; k < 4; ++k) states.emplace_back(pos(rng), pos(rng), ang(rng));
    if (!(min_pairwise_h(states, cfg.geometry, cfg.barrier) > 0.0)) continue;
    std::vector<WheelCommand> u_nom;
    for (int k = 0; k < 4; ++k) u_nom.push_back({wheel(rng), wheel(rng)});
    const FilterResult r = filter_step(states, u_nom, cfg);
    ASSERT_EQ(r.solver.status, QpStatus::optimal);
    const CertificateCheck c = certificate_holds(states, r.u_star, cfg);
    EXPECT_TRUE(c.holds) << c.worst_margin;
    ++checked;
  }
}

TEST(Filter, RobustAnswerSatisfiesNominalConstraints) {
  const FilterConfig robust = strict_config(5.0);
  const FilterConfig plain = strict_config(0.0);
  std::mt19937_64 rng(203);
  std::uniform_real_distribution<double> pos(-0.4, 0.4), ang(-pi, pi), wheel(-25.0, 25.0);
  int checked = 0;
  while (checked < 50) {
    std::vector<RobotState> states;
    for (int k = 0; k < 3; ++k) states.emplace_back(pos(rng), pos(rng), ang(rng));
    if (!(min_pairwise_h(states, robust.geometry, robust.barrier) > 0.0)) continue;
    std::vector<WheelCommand> u_nom;
    for (int k = 0; k < 3; ++k) u_nom.push_back({wheel(rng), wheel(rng)});
    const FilterResult r = filter_step(states, u_nom, robust);
    ASSERT_EQ(r.solver.status, QpStatus::optimal);
    EXPECT_TRUE(certificate_holds(states, r.u_star, plain).holds);
    const ConstraintSet a = assemble_constraints(states, robust.geometry, robust.barrier, robust.disturbance);
    const ConstraintSet b = assemble_constraints(states, plain.geometry, plain.barrier, plain.disturbance);
    EXPECT_TRUE(((a.b - b.b).array() >= 0.0).all());
    ++checked;
  }
}

TEST(Filter, PermutationEquivariance) {
  const FilterConfig cfg = strict_config();
  std::mt19937_64 rng(207);
  std::uniform_real_distribution<double> pos(-0.4, 0.4), ang(-pi, pi), wheel(-25.0, 25.0);
  int checked = 0;
  while (checked < 20) {
    std::vector<RobotState> states;
    std::vector<WheelCommand> u_nom;
    for (int k = 0; k < 5; ++k) {
      states.emplace_back(pos(rng), pos(rng), ang(rng));
      u_nom.push_back({wheel(rng), wheel(rng)});
    }
    if (!(min_pairwise_h(states, cfg.geometry, cfg.barrier) > 0.0)) continue;
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    std::vector<RobotState> ps;
    std::vector<WheelCommand> pu;
    for (std::size_t k : perm) {
      ps.push_back(states[k]);
      pu.push_back(u_nom[k]);
    }
    const FilterResult a = filter_step(states, u_nom, cfg);
    const FilterResult b = filter_step(ps, pu, cfg);
    for (std::size_t k = 0; k < perm.size(); ++k) {
      EXPECT_NEAR(b.u_star[k].omega_r, a.u_star[perm[k]].omega_r, 1e-8);
      EXPECT_NEAR(b.u_star[k].omega_l, a.u_star[perm[k]].omega_l, 1e-8);
    }
    ++checked;
  }
}

TEST(Filter, Fallbacks) {
  // Overlapping robots driven hard into each other with a large hull: the
  // robust rows exceed what the wheel box can deliver.
  FilterConfig cfg = strict_config(200.0);
  const std::vector<RobotState> states{RobotState(0, 0, 0), RobotState(0.05, 0, pi)};
  const std::vector<WheelCommand> u_nom{{25, 25}, {25, 25}};
  EXPECT_THROW(filter_step(states, u_nom, cfg), FilterError);

  cfg.fallback.kind = FallbackKind::zero_input;
  const FilterResult z = filter_step(states, u_nom, cfg);
  EXPECT_TRUE(z.fallback_used);
  EXPECT_EQ(stack(z.u_star), Eigen::VectorXd::Zero(4));

  cfg.fallback.kind = FallbackKind::slack;
  const FilterResult s = filter_step(states, u_nom, cfg);
  EXPECT_TRUE(s.fallback_used);
  EXPECT_EQ(s.solver.status, QpStatus::optimal);
  EXPECT_LE(stack(s.u_star).lpNorm<Eigen::Infinity>(), cfg.u_max + 1e-10);
}

TEST(Filter, RejectsMalformedInput) {
  const FilterConfig cfg = strict_config();
  const std::vector<RobotState> states{RobotState(0, 0, 0), RobotState(1, 0, 0)};
  EXPECT_THROW(filter_step(states, std::vector<WheelCommand>{{1, 1}}, cfg), std::invalid_argument);
  EXPECT_THROW(filter_step(std::vector<RobotState>{}, std::vector<WheelCommand>{}, cfg), std::invalid_argument);
  EXPECT_THROW(filter_step(states, std::vector<WheelCommand>{{NAN, 1}, {1, 1}}, cfg), std::invalid_argument);
}

TEST(Filter, SingleRobotOnlyClipsToBox) {
  const FilterConfig cfg = strict_config();
  const FilterResult r = filter_step(std::vector<RobotState>{RobotState()}, std::vector<WheelCommand>{{10, -5}}, cfg);
  EXPECT_EQ(r.constraints.rows(), 0);
  EXPECT_NEAR(r.u_star[0].omega_r, 10.0, 1e-12);
  EXPECT_NEAR(r.u_star[0].omega_l, -5.0, 1e-12);
  EXPECT_TRUE(std::isinf(r.min_h));
}
