#include "ct/delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace ct {

namespace {

struct Tri {
  int a, b, c;
  bool alive = true;
};

long double orient2d(const Vec2& pa, const Vec2& pb, const Vec2& pc) {
  const long double ax = pa.x, ay = pa.y;
  return (static_cast<long double>(pb.x) - ax) *
             (static_cast<long double>(pc.y) - ay) -
         (static_cast<long double>(pb.y) - ay) *
             (static_cast<long double>(pc.x) - ax);
}

// > 0 when q lies strictly inside the circumcircle of CCW (a,b,c)
long double incircle(const Vec2& a, const Vec2& b, const Vec2& c,
                     const Vec2& q) {
  const long double adx = a.x - q.x, ady = a.y - q.y;
  const long double bdx = b.x - q.x, bdy = b.y - q.y;
  const long double cdx = c.x - q.x, cdy = c.y - q.y;
  const long double ad = adx * adx + ady * ady;
  const long double bd = bdx * bdx + bdy * bdy;
  const long double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) +
         ad * (bdx * cdy - bdy * cdx);
}

}  // namespace

Triangulation delaunay(const std::vector<Vec2>& points) {
  const std::size_t n = points.size();
  if (n < 3) throw std::invalid_argument("delaunay: need at least 3 points");

  double xmin = points[0].x, xmax = xmin, ymin = points[0].y, ymax = ymin;
  for (const auto& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
  const double tol = span * 1e-12;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(points[i].x - points[j].x) < tol &&
          std::abs(points[i].y - points[j].y) < tol)
        throw std::invalid_argument("delaunay: duplicate points " +
                                    std::to_string(i) + " and " +
                                    std::to_string(j));

  // working point list with a large enclosing super-triangle appended
  std::vector<Vec2> pts(points);
  const double cx = (xmin + xmax) / 2, cy = (ymin + ymax) / 2;
  const double r = 64.0 * span;
  pts.push_back({cx - 2 * r, cy - r});
  pts.push_back({cx + 2 * r, cy - r});
  pts.push_back({cx, cy + 2 * r});
  const int s0 = static_cast<int>(n), s1 = s0 + 1, s2 = s0 + 2;

  std::vector<Tri> tris;
  tris.push_back({s0, s1, s2});

  for (int ip = 0; ip < static_cast<int>(n); ++ip) {
    const Vec2& p = pts[ip];
    // cavity: triangles whose circumcircle contains p
    std::vector<int> bad;
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
      if (!tris[t].alive) continue;
      if (incircle(pts[tris[t].a], pts[tris[t].b], pts[tris[t].c], p) > 0)
        bad.push_back(t);
    }
    // boundary of the cavity = edges appearing exactly once
    std::map<std::pair<int, int>, int> edge_count;
    for (int t : bad) {
      const int v[3] = {tris[t].a, tris[t].b, tris[t].c};
      for (int e = 0; e < 3; ++e) {
        int u = v[e], w = v[(e + 1) % 3];
        edge_count[{std::min(u, w), std::max(u, w)}]++;
      }
      tris[t].alive = false;
    }
    for (int t : bad) {
      const int v[3] = {tris[t].a, tris[t].b, tris[t].c};
      for (int e = 0; e < 3; ++e) {
        int u = v[e], w = v[(e + 1) % 3];
        if (edge_count[{std::min(u, w), std::max(u, w)}] != 1) continue;
        Tri nt{u, w, ip};
        if (orient2d(pts[nt.a], pts[nt.b], pts[nt.c]) < 0)
          std::swap(nt.b, nt.c);
        tris.push_back(nt);
      }
    }
  }

  Triangulation out;
  out.points = points;
  for (const auto& t : tris) {
    if (!t.alive) continue;
    if (t.a >= s0 || t.b >= s0 || t.c >= s0) continue;
    if (std::abs(orient2d(pts[t.a], pts[t.b], pts[t.c])) <=
        static_cast<long double>(tol) * span)
      continue;  // degenerate sliver
    out.triangles.push_back({t.a, t.b, t.c});
  }
  if (out.triangles.empty())
    throw std::invalid_argument("delaunay: no triangulation (collinear points)");

  out.vertex_neighbors.assign(n, {});
  std::set<std::pair<int, int>> seen;
  for (const auto& t : out.triangles) {
    const int v[3] = {t[0], t[1], t[2]};
    for (int e = 0; e < 3; ++e) {
      int u = v[e], w = v[(e + 1) % 3];
      if (seen.insert({std::min(u, w), std::max(u, w)}).second) {
        out.vertex_neighbors[u].push_back(w);
        out.vertex_neighbors[w].push_back(u);
      }
    }
  }
  for (auto& nb : out.vertex_neighbors) std::sort(nb.begin(), nb.end());
  return out;
}

int Triangulation::locate(const Vec2& q, std::array<double, 3>& bary) const {
  constexpr double kTol = -1e-9;
  for (int t = 0; t < static_cast<int>(triangles.size()); ++t) {
    const Vec2& a = points[triangles[t][0]];
    const Vec2& b = points[triangles[t][1]];
    const Vec2& c = points[triangles[t][2]];
    const double det = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if (det == 0.0) continue;
    const double l1 =
        ((b.x - q.x) * (c.y - q.y) - (b.y - q.y) * (c.x - q.x)) / det;
    const double l2 =
        ((c.x - q.x) * (a.y - q.y) - (c.y - q.y) * (a.x - q.x)) / det;
    const double l3 = 1.0 - l1 - l2;
    if (l1 >= kTol && l2 >= kTol && l3 >= kTol) {
      bary = {l1, l2, l3};
      return t;
    }
  }
  return -1;
}

}  // namespace ct
