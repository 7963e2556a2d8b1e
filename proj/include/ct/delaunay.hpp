#pragma once

#include <array>
#include <vector>

#include "ct/montage.hpp"

namespace ct {

struct Triangulation {
  std::vector<Vec2> points;
  std::vector<std::array<int, 3>> triangles;  // CCW vertex indices
  std::vector<std::vector<int>> vertex_neighbors;

  // Containing triangle of q with its barycentric coordinates, or -1 when q
  // lies outside the hull. Boundary points are kept (tolerance on the
  // barycentric coordinates).
  int locate(const Vec2& q, std::array<double, 3>& bary) const;
};

// Bowyer-Watson Delaunay triangulation. Throws on fewer than 3 points,
// duplicate points, or an all-collinear configuration.
Triangulation delaunay(const std::vector<Vec2>& points);

}  // namespace ct
