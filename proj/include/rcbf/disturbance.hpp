#pragma once

// Convex-hull disturbance sets over wheel-velocity space.
//
// A hull is stored as its generating vertex list. Interior or duplicate
// points are kept as given; they never change a support minimum.

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace rcbf {

using Vertex = Eigen::Vector2d;
using VertexList = std::vector<Vertex, Eigen::aligned_allocator<Vertex>>;

class DisturbanceHull {
 public:
  explicit DisturbanceHull(VertexList vertices) : vertices_(std::move(vertices)) {
    if (vertices_.empty())
      throw std::invalid_argument("DisturbanceHull: at least one vertex required");
    for (const auto& v : vertices_)
      if (!v.allFinite()) throw std::invalid_argument("DisturbanceHull: non-finite vertex");
  }

  const VertexList& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  const Vertex& operator[](std::size_t k) const { return vertices_[k]; }

 private:
  VertexList vertices_;
};

class HullUnion {
 public:
  HullUnion(DisturbanceHull hull) : hulls_{std::move(hull)} {}  // NOLINT: implicit on purpose
  explicit HullUnion(std::vector<DisturbanceHull> hulls) : hulls_(std::move(hulls)) {
    if (hulls_.empty()) throw std::invalid_argument("HullUnion: at least one hull required");
  }

  const std::vector<DisturbanceHull>& hulls() const { return hulls_; }
  std::size_t size() const { return hulls_.size(); }
  const DisturbanceHull& operator[](std::size_t k) const { return hulls_[k]; }

  /// All vertices of all hulls, in declaration order.
  DisturbanceHull pooled() const {
    VertexList all;
    for (const auto& h : hulls_) all.insert(all.end(), h.vertices().begin(), h.vertices().end());
    return DisturbanceHull(std::move(all));
  }

 private:
  std::vector<DisturbanceHull> hulls_;
};

/// The four corners (+-psi, +-psi) of a box of half-width psi.
inline DisturbanceHull symmetric_box(double psi) {
  if (!(psi >= 0.0) || !std::isfinite(psi))
    throw std::invalid_argument("symmetric_box: psi must be a nonnegative finite number");
  return DisturbanceHull({Vertex(psi, psi), Vertex(psi, -psi), Vertex(-psi, psi), Vertex(-psi, -psi)});
}

struct SupportMin {
  double value;
  std::size_t index;  // lowest index attaining the minimum
};

/// min_k z . psi_k over the vertices, O(p).
inline SupportMin support_argmin(const Eigen::Vector2d& z, const DisturbanceHull& hull) {
  const auto& v = hull.vertices();
  SupportMin best{z.dot(v[0]), 0};
  for (std::size_t k = 1; k < v.size(); ++k) {
    const double s = z.dot(v[k]);
    if (s < best.value) best = {s, k};
  }
  return best;
}

inline double support_min(const Eigen::Vector2d& z, const DisturbanceHull& hull) {
  return support_argmin(z, hull).value;
}

inline std::vector<double> union_support_mins(const Eigen::Vector2d& z, const HullUnion& u) {
  std::vector<double> out;
  out.reserve(u.size());
  for (const auto& h : u.hulls()) out.push_back(support_min(z, h));
  return out;
}

namespace sample {
struct UniformConvex {};
struct WorstCase {
  Eigen::Vector2d direction;
};
struct VertexIndex {
  std::size_t k;
};
}  // namespace sample

using SampleMode = std::variant<sample::UniformConvex, sample::WorstCase, sample::VertexIndex>;

/// Draws a point of co(hull). Uniform-convex mode weights the vertices with a
/// flat Dirichlet draw; worst-case returns the vertex attaining support_min.
template <class Rng>
Eigen::Vector2d sample_hull(const DisturbanceHull& hull, const SampleMode& mode, Rng& rng) {
  if (const auto* wc = std::get_if<sample::WorstCase>(&mode))
    return hull[support_argmin(wc->direction, hull).index];
  if (const auto* vi = std::get_if<sample::VertexIndex>(&mode)) {
    if (vi->k >= hull.size()) throw std::out_of_range("sample_hull: vertex index out of range");
    return hull[vi->k];
  }
  std::exponential_distribution<double> expo(1.0);
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  double total = 0.0;
  for (const auto& v : hull.vertices()) {
    const double w = expo(rng);
    acc += w * v;
    total += w;
  }
  if (!(total > 0.0)) return hull[0];
  return acc / total;
}

}  // namespace rcbf
