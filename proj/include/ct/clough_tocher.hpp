#pragma once

#include <array>
#include <vector>

#include "ct/delaunay.hpp"

namespace ct {

// C1 piecewise-cubic interpolation of scattered data: each Delaunay triangle
// is split at its barycenter into three cubic Bezier patches. Vertex
// gradients come from the global minimum-curvature estimate (Gauss-Seidel
// over per-vertex 2x2 systems); the remaining Bezier ordinates follow from
// C1 conditions plus a linear cross-derivative rule on the outer edges
// (transversal direction: the join of the two opposite vertices for interior
// edges, the median for hull edges).
class CloughTocher2D {
 public:
  explicit CloughTocher2D(Triangulation tri);

  const Triangulation& triangulation() const { return tri_; }

  // One gradient per point, laid out [gx0, gy0, gx1, gy1, ...].
  std::vector<double> estimate_gradients(const std::vector<double>& values,
                                         int max_iter = 1000,
                                         double tol = 1e-12) const;

  struct NodeLocation {
    int triangle = -1;  // -1: outside the hull
    std::array<double, 3> bary{};
  };
  NodeLocation locate(const Vec2& q) const;

  double evaluate_at(const NodeLocation& loc, const std::vector<double>& values,
                     const std::vector<double>& gradients,
                     double fill_value) const;

  // Convenience single-point evaluation (locates, estimates gradients).
  double evaluate(const std::vector<double>& values, const Vec2& q,
                  double fill_value = 0.0) const;

  // Batch evaluation against precomputed locations; gradients estimated once.
  std::vector<double> interpolate(const std::vector<double>& values,
                                  const std::vector<NodeLocation>& locs,
                                  double fill_value = 0.0) const;

 private:
  std::array<double, 10> patch_ordinates(int tri_index, int mini,
                                         const std::vector<double>& values,
                                         const std::vector<double>& grads) const;

  Triangulation tri_;
  // per triangle, per outer edge: transversal direction for the
  // linear-cross-derivative rule
  std::vector<std::array<Vec2, 3>> edge_dirs_;
};

}  // namespace ct
