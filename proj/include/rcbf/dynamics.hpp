#pragma once

// Differential-drive kinematics and the look-ahead output map.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace rcbf {

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::remainder(a, two_pi);  // [-pi, pi]
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

/// Planar pose of one robot: position of the wheel-axle center and heading.
struct RobotState {
  double x1{0.0};
  double x2{0.0};
  double theta{0.0};

  RobotState() = default;
  RobotState(double x1_, double x2_, double theta_)
      : x1(x1_), x2(x2_), theta(wrap_angle(theta_)) {
    if (!std::isfinite(x1) || !std::isfinite(x2) || !std::isfinite(theta_))
      throw std::invalid_argument("RobotState: non-finite component");
  }

  Eigen::Vector2d position() const { return {x1, x2}; }
  bool finite() const {
    return std::isfinite(x1) && std::isfinite(x2) && std::isfinite(theta);
  }
};

/// Right/left wheel angular velocities (rad/s).
struct WheelCommand {
  double omega_r{0.0};
  double omega_l{0.0};

  Eigen::Vector2d vec() const { return {omega_r, omega_l}; }
  static WheelCommand from(const Eigen::Vector2d& v) { return {v(0), v(1)}; }
};

struct RobotGeometry {
  double wheel_radius{0.016};
  double base_length{0.105};
  double look_ahead{0.03};
  double diameter{0.12};

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string("RobotGeometry: ") + name +
                                    " must be positive and finite");
    };
    positive(wheel_radius, "wheel_radius");
    positive(base_length, "base_length");
    positive(look_ahead, "look_ahead");
    positive(diameter, "diameter");
  }
};

/// Maps wheel speeds (omega_r, omega_l) to body velocities (v, omega).
inline Eigen::Matrix2d wheel_matrix(const RobotGeometry& geom) {
  const double r = geom.wheel_radius;
  const double lb = geom.base_length;
  Eigen::Matrix2d G;
  G << r / 2.0, r / 2.0,
      -r / lb, r / lb;
  return G;
}

inline Eigen::Matrix2d rotation(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix2d R;
  R << c, -s,
      s, c;
  return R;
}

/// diag(1, l_p) * G: the body-frame part of the output Jacobian.
inline Eigen::Matrix2d body_output_matrix(const RobotGeometry& geom) {
  Eigen::Matrix2d LG = wheel_matrix(geom);
  LG.row(1) *= geom.look_ahead;
  return LG;
}

/// Point l_p ahead of the wheel axle along the heading.
inline Eigen::Vector2d output_point(const RobotState& s, const RobotGeometry& geom) {
  return {s.x1 + geom.look_ahead * std::cos(s.theta),
          s.x2 + geom.look_ahead * std::sin(s.theta)};
}

/// g_i = R(theta) L G, so that d/dt output_point = g_i * u.
inline Eigen::Matrix2d output_jacobian(const RobotState& s, const RobotGeometry& geom) {
  return rotation(s.theta) * body_output_matrix(geom);
}

enum class Integrator { euler, rk4 };

namespace detail {

inline Eigen::Vector3d unicycle_rhs(const Eigen::Vector3d& x, const Eigen::Vector2d& body_vel) {
  return {std::cos(x(2)) * body_vel(0), std::sin(x(2)) * body_vel(0), body_vel(1)};
}

}  // namespace detail

/// Advances one step of x' = [cos th, 0; sin th, 0; 0, 1] G (u + d).
/// The wheel input is held constant over the step.
inline RobotState step_dynamics(const RobotState& s, const WheelCommand& u,
                                const Eigen::Vector2d& d, double dt,
                                const RobotGeometry& geom,
                                Integrator method = Integrator::euler) {
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw std::invalid_argument("step_dynamics: dt must be positive");
  if (!s.finite() || !std::isfinite(u.omega_r) || !std::isfinite(u.omega_l) ||
      !d.allFinite())
    throw std::invalid_argument("step_dynamics: non-finite input");

  const Eigen::Vector2d body_vel = wheel_matrix(geom) * (u.vec() + d);
  const Eigen::Vector3d x0(s.x1, s.x2, s.theta);
  Eigen::Vector3d x1;
  if (method == Integrator::euler) {
    x1 = x0 + dt * detail::unicycle_rhs(x0, body_vel);
  } else {
    const Eigen::Vector3d k1 = detail::unicycle_rhs(x0, body_vel);
    const Eigen::Vector3d k2 = detail::unicycle_rhs(x0 + 0.5 * dt * k1, body_vel);
    const Eigen::Vector3d k3 = detail::unicycle_rhs(x0 + 0.5 * dt * k2, body_vel);
    const Eigen::Vector3d k4 = detail::unicycle_rhs(x0 + dt * k3, body_vel);
    x1 = x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return RobotState(x1(0), x1(1), x1(2));
}

}  // namespace rcbf
