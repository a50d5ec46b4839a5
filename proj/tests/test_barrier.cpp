#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "rcbf/barrier.hpp"
#include "oracles.hpp"

using namespace rcbf;
using std::numbers::pi;

namespace {

std::vector<RobotState> random_states(std::mt19937_64& rng, std::size_t n, double spread = 2.0) {
  std::uniform_real_distribution<double> pos(-spread, spread), ang(-pi, pi);
  std::vector<RobotState> s;
  for (std::size_t k = 0; k < n; ++k) s.emplace_back(pos(rng), pos(rng), ang(rng));
  return s;
}

}  // namespace

TEST(Barrier, PairwiseHExamples) {
  const BarrierParams params;
  EXPECT_NEAR(pairwise_h({0, 0}, {0.12, 0}, params), 0.0, 1e-17);
  EXPECT_DOUBLE_EQ(pairwise_h({0, 0}, {1, 0}, params), 0.9856);
  EXPECT_EQ(pairwise_h({0.3, -1}, {2, 0.5}, params), pairwise_h({2, 0.5}, {0.3, -1}, params));
}

TEST(Barrier, GradientExamples) {
  const PairGradient g = pairwise_h_grad({1, 0}, {0, 0});
  EXPECT_EQ(g.wrt_i, Eigen::RowVector2d(2, 0));
  EXPECT_EQ(g.wrt_j, Eigen::RowVector2d(-2, 0));
  const PairGradient z = pairwise_h_grad({0.4, 0.4}, {0.4, 0.4});
  EXPECT_EQ(z.wrt_i, Eigen::RowVector2d(0, 0));
  EXPECT_EQ(z.wrt_j, Eigen::RowVector2d(0, 0));
}

TEST(Barrier, GradientMatchesFiniteDifferences) {
  const BarrierParams params;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Vector2d pi_(c(rng), c(rng)), pj(c(rng), c(rng));
    const PairGradient g = pairwise_h_grad(pi_, pj);
    const Eigen::Vector2d fi =
        oracle::fd_gradient([&](const Eigen::Vector2d& x) { return pairwise_h(x, pj, params); }, pi_);
    const Eigen::Vector2d fj =
        oracle::fd_gradient([&](const Eigen::Vector2d& x) { return pairwise_h(pi_, x, params); }, pj);
    EXPECT_LT((fi - g.wrt_i.transpose()).norm(), 1e-7);
    EXPECT_LT((fj - g.wrt_j.transpose()).norm(), 1e-7);
    EXPECT_EQ(g.wrt_i, -g.wrt_j);
  }
}

TEST(Barrier, ClassKCubic) {
  EXPECT_EQ(class_k_cubic(0.0, 150.0), 0.0);
  EXPECT_NEAR(class_k_cubic(0.1, 150.0), 0.15, 1e-15);
  EXPECT_NEAR(class_k_cubic(-0.1, 150.0), -0.15, 1e-15);
  EXPECT_NEAR(BarrierParams{}.alpha(0.1), 0.15, 1e-15);
}

TEST(Barrier, OddPolynomialOverride) {
  BarrierParams params;
  params.class_k_override = {2.0, 0.0, 1.0};  // 2h + h^5
  EXPECT_NEAR(params.alpha(0.5), 1.0 + 0.03125, 1e-15);
  EXPECT_NEAR(params.alpha(-0.5), -(1.0 + 0.03125), 1e-15);
  params.class_k_override = {0.0, -1.0};
  EXPECT_THROW(params.validate(), std::invalid_argument);
  params.class_k_override = {0.0};
  EXPECT_THROW(params.validate(), std::invalid_argument);
}

TEST(Barrier, RobustMarginExamples) {
  const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
  const Eigen::RowVector2d gi(0.5, 1.0), gj(0.5, 0.0);
  EXPECT_EQ(robust_margin(gi, gj, I, I, symmetric_box(0.0)), 0.0);
  EXPECT_DOUBLE_EQ(robust_margin(gi, gj, I, I, symmetric_box(5.0)), -10.0);

  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> c(-3.0, 3.0), psi(0.0, 6.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Matrix2d g1, g2;
    g1 << c(rng), c(rng), c(rng), c(rng);
    g2 << c(rng), c(rng), c(rng), c(rng);
    const Eigen::RowVector2d r1(c(rng), c(rng)), r2(c(rng), c(rng));
    const double s = psi(rng);
    const Eigen::RowVector2d z = r1 * g1 + r2 * g2;
    EXPECT_NEAR(robust_margin(r1, r2, g1, g2, symmetric_box(s)), -s * (std::abs(z(0)) + std::abs(z(1))), 1e-12);
  }
}

TEST(Barrier, RowCounts) {
  const RobotGeometry geom;
  const BarrierParams params;
  std::mt19937_64 rng(47);
  EXPECT_EQ(assemble_constraints(random_states(rng, 1), geom, params, symmetric_box(5)).rows(), 0);
  const ConstraintSet two = assemble_constraints(random_states(rng, 2), geom, params, symmetric_box(5));
  EXPECT_EQ(two.rows(), 1);
  EXPECT_EQ(two.A.cols(), 4);
  EXPECT_EQ(assemble_constraints(random_states(rng, 22), geom, params, symmetric_box(5)).rows(), 231);
  const HullUnion three(std::vector<DisturbanceHull>{symmetric_box(1), symmetric_box(2), symmetric_box(3)});
  EXPECT_EQ(assemble_constraints(random_states(rng, 5), geom, params, three).rows(), 30);
  EXPECT_THROW(assemble_constraints(std::vector<RobotState>{}, geom, params, symmetric_box(5)), std::invalid_argument);
}

TEST(Barrier, ZeroHullReducesToNominalCertificate) {
  const RobotGeometry geom;
  const BarrierParams params;
  std::mt19937_64 rng(53);
  const auto states = random_states(rng, 8);
  const ConstraintSet cs = assemble_constraints(states, geom, params, symmetric_box(0.0));
  for (Eigen::Index r = 0; r < cs.rows(); ++r)
    EXPECT_NEAR(cs.b(r), -params.gamma * std::pow(cs.info[r].h, 3), 1e-15 * std::max(1.0, std::abs(cs.b(r))));
}

TEST(Barrier, RhsMonotoneInPsi) {
  const RobotGeometry geom;
  const BarrierParams params;
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 20; ++trial) {
    const auto states = random_states(rng, 6);
    Eigen::VectorXd prev = assemble_constraints(states, geom, params, symmetric_box(0.0)).b;
    for (double psi : {0.5, 1.0, 5.0, 10.0}) {
      const Eigen::VectorXd b = assemble_constraints(states, geom, params, symmetric_box(psi)).b;
      EXPECT_TRUE(((b - prev).array() >= 0.0).all());
      prev = b;
    }
  }
}

TEST(Barrier, RowSparsity) {
  const RobotGeometry geom;
  const BarrierParams params;
  std::mt19937_64 rng(61);
  const ConstraintSet cs = assemble_constraints(random_states(rng, 7), geom, params, symmetric_box(5));
  for (Eigen::Index r = 0; r < cs.rows(); ++r) {
    const RowInfo& info = cs.info[r];
    int nonzero = 0;
    for (Eigen::Index c = 0; c < cs.A.cols(); ++c) {
      if (cs.A(r, c) == 0.0) continue;
      ++nonzero;
      const auto robot = static_cast<std::size_t>(c / 2);
      EXPECT_TRUE(robot == info.i || robot == info.j);
    }
    EXPECT_LE(nonzero, 4);
  }
}

TEST(Barrier, UnionEqualsStackedSingleHulls) {
  const RobotGeometry geom;
  const BarrierParams params;
  std::mt19937_64 rng(67);
  const auto states = random_states(rng, 6);
  const std::vector<DisturbanceHull> hulls{symmetric_box(1.0), DisturbanceHull({Vertex(0.5, -2.0), Vertex(1.0, 3.0)}),
                                           symmetric_box(4.0)};
  const ConstraintSet joint = assemble_constraints(states, geom, params, HullUnion(hulls));
  Eigen::Index row = 0;
  for (const auto& h : hulls) {
    const ConstraintSet single = assemble_constraints(states, geom, params, h);
    EXPECT_EQ(joint.A.middleRows(row, single.rows()), single.A);
    EXPECT_EQ(joint.b.segment(row, single.rows()), single.b);
    row += single.rows();
  }
  EXPECT_EQ(row, joint.rows());
}

TEST(Barrier, PairOrderIsLexicographic) {
  const RobotGeometry geom;
  const BarrierParams params;
  std::mt19937_64 rng(71);
  const ConstraintSet cs = assemble_constraints(random_states(rng, 4), geom, params, symmetric_box(1));
  const std::vector<std::pair<std::size_t, std::size_t>> expected{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  for (std::size_t r = 0; r < expected.size(); ++r) {
    EXPECT_EQ(cs.info[r].i, expected[r].first);
    EXPECT_EQ(cs.info[r].j, expected[r].second);
  }
}

TEST(Barrier, PruningDropsDistantPairs) {
  const RobotGeometry geom;
  const BarrierParams params;
  const std::vector<RobotState> states{RobotState(0, 0, 0), RobotState(0.5, 0, 0), RobotState(5, 0, 0)};
  EXPECT_EQ(assemble_constraints(states, geom, params, symmetric_box(1), 1.0).rows(), 1);
  EXPECT_EQ(assemble_constraints(states, geom, params, symmetric_box(1)).rows(), 3);
}

TEST(Barrier, MinPairwiseH) {
  const RobotGeometry geom;
  const BarrierParams params;
  EXPECT_TRUE(std::isinf(min_pairwise_h(std::vector<RobotState>{RobotState()}, geom, params)));
  const std::vector<RobotState> two{RobotState(0, 0, 0), RobotState(1, 0, 0)};
  EXPECT_NEAR(min_pairwise_h(two, geom, params), 0.9856, 1e-15);
}
