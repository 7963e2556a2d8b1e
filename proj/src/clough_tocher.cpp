#include "ct/clough_tocher.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace ct {

namespace {

inline Vec2 sub(const Vec2& a, const Vec2& b) { return {a.x - b.x, a.y - b.y}; }
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }

}  // namespace

CloughTocher2D::CloughTocher2D(Triangulation tri) : tri_(std::move(tri)) {
  // vertex opposite each edge in the neighboring triangle, if any
  std::map<std::pair<int, int>, std::array<int, 2>> edge_opp;
  for (std::size_t t = 0; t < tri_.triangles.size(); ++t) {
    const auto& tv = tri_.triangles[t];
    for (int e = 0; e < 3; ++e) {
      const int a = tv[e], b = tv[(e + 1) % 3], opp = tv[(e + 2) % 3];
      auto key = std::minmax(a, b);
      auto [it, inserted] =
          edge_opp.try_emplace({key.first, key.second}, std::array<int, 2>{opp, -1});
      if (!inserted) it->second[1] = opp;
    }
  }
  edge_dirs_.resize(tri_.triangles.size());
  for (std::size_t t = 0; t < tri_.triangles.size(); ++t) {
    const auto& tv = tri_.triangles[t];
    for (int e = 0; e < 3; ++e) {
      const int a = tv[e], b = tv[(e + 1) % 3], own = tv[(e + 2) % 3];
      auto key = std::minmax(a, b);
      const auto& opp = edge_opp.at({key.first, key.second});
      const int other = opp[0] == own ? opp[1] : opp[0];
      const Vec2& pa = tri_.points[a];
      const Vec2& pb = tri_.points[b];
      const Vec2& po = tri_.points[own];
      if (other >= 0) {
        // interior edge: both sides agree on the join of opposite vertices
        edge_dirs_[t][e] = sub(tri_.points[other], po);
      } else {
        // hull edge: median from the edge midpoint to the opposite vertex
        edge_dirs_[t][e] = sub(po, Vec2{(pa.x + pb.x) / 2, (pa.y + pb.y) / 2});
      }
    }
  }
}

std::vector<double> CloughTocher2D::estimate_gradients(
    const std::vector<double>& values, int max_iter, double tol) const {
  const std::size_t n = tri_.points.size();
  if (values.size() != n)
    throw std::invalid_argument("clough-tocher: value count mismatch");
  std::vector<double> g(2 * n, 0.0);
  for (int iter = 0; iter < max_iter; ++iter) {
    double max_change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double q00 = 0, q01 = 0, q11 = 0, r0 = 0, r1 = 0;
      for (int j : tri_.vertex_neighbors[i]) {
        const Vec2 e = sub(tri_.points[j], tri_.points[i]);
        const double len = std::hypot(e.x, e.y);
        const double inv_l3 = 1.0 / (len * len * len);
        q00 += 8.0 * inv_l3 * e.x * e.x;
        q01 += 8.0 * inv_l3 * e.x * e.y;
        q11 += 8.0 * inv_l3 * e.y * e.y;
        const double dj = g[2 * j] * e.x + g[2 * j + 1] * e.y;
        const double s = (12.0 * (values[j] - values[i]) - 4.0 * dj) * inv_l3;
        r0 += s * e.x;
        r1 += s * e.y;
      }
      const double det = q00 * q11 - q01 * q01;
      double gx = 0, gy = 0;
      if (std::abs(det) > 1e-300) {
        gx = (q11 * r0 - q01 * r1) / det;
        gy = (q00 * r1 - q01 * r0) / det;
      }
      max_change = std::max(
          {max_change, std::abs(gx - g[2 * i]), std::abs(gy - g[2 * i + 1])});
      g[2 * i] = gx;
      g[2 * i + 1] = gy;
    }
    if (max_change < tol) break;
  }
  return g;
}

CloughTocher2D::NodeLocation CloughTocher2D::locate(const Vec2& q) const {
  NodeLocation loc;
  loc.triangle = tri_.locate(q, loc.bary);
  return loc;
}

// Bezier ordinates of mini patch `mini` (vertices V_mini, V_mini+1, V4) in
// the order b300 b030 b003 b210 b120 b201 b021 b111 b102 b012.
std::array<double, 10> CloughTocher2D::patch_ordinates(
    int tri_index, int mini, const std::vector<double>& values,
    const std::vector<double>& grads) const {
  const auto& tv = tri_.triangles[tri_index];
  const Vec2 p[3] = {tri_.points[tv[0]], tri_.points[tv[1]],
                     tri_.points[tv[2]]};
  const Vec2 p4{(p[0].x + p[1].x + p[2].x) / 3, (p[0].y + p[1].y + p[2].y) / 3};
  const double f[3] = {values[tv[0]], values[tv[1]], values[tv[2]]};
  const Vec2 g[3] = {{grads[2 * tv[0]], grads[2 * tv[0] + 1]},
                     {grads[2 * tv[1]], grads[2 * tv[1] + 1]},
                     {grads[2 * tv[2]], grads[2 * tv[2] + 1]}};

  // ring-1 ordinate toward the center at each vertex
  double ring1[3], b111[3];
  for (int v = 0; v < 3; ++v) ring1[v] = f[v] + dot(g[v], sub(p4, p[v])) / 3;
  for (int e = 0; e < 3; ++e) {
    const int a = e, b = (e + 1) % 3;
    const double b300 = f[a];
    const double b030 = f[b];
    const double b210 = f[a] + dot(g[a], sub(p[b], p[a])) / 3;
    const double b120 = f[b] + dot(g[b], sub(p[a], p[b])) / 3;
    const double b201 = ring1[a];
    const double b021 = ring1[b];
    // barycentric direction of the edge rule w in (Va, Vb, V4)
    const Vec2 w = edge_dirs_[tri_index][e];
    const Vec2 ea = sub(p[a], p4);
    const Vec2 eb = sub(p[b], p4);
    const double det = ea.x * eb.y - ea.y * eb.x;
    const double d1 = (w.x * eb.y - w.y * eb.x) / det;
    const double d2 = (ea.x * w.y - ea.y * w.x) / det;
    const double d3 = -d1 - d2;
    b111[e] = (d1 * (b300 - 2 * b210 + b120) + d2 * (b210 - 2 * b120 + b030) +
               d3 * (b201 + b021)) /
              (2 * d3);
  }
  // C1 across interior edges of the split fixes the remaining ring, then the
  // center is their mean.
  double r[3];
  for (int e = 0; e < 3; ++e) {
    const int nxt = (e + 1) % 3;
    r[nxt] = (b111[e] + b111[nxt] + ring1[nxt]) / 3;
  }
  const double b003 = (r[0] + r[1] + r[2]) / 3;

  const int a = mini, b = (mini + 1) % 3;
  const double b210m = f[a] + dot(g[a], sub(p[b], p[a])) / 3;
  const double b120m = f[b] + dot(g[b], sub(p[a], p[b])) / 3;
  return {f[a],        f[b],    b003,       b210m,  b120m,
          ring1[a],    ring1[b], b111[mini], r[mini], r[(mini + 1) % 3]};
}

double CloughTocher2D::evaluate_at(const NodeLocation& loc,
                                   const std::vector<double>& values,
                                   const std::vector<double>& gradients,
                                   double fill_value) const {
  if (loc.triangle < 0) return fill_value;
  const auto& l = loc.bary;
  // mini patch = the one whose off-edge macro coordinate is smallest
  int mini = 0;
  if (l[(0 + 2) % 3] > l[(1 + 2) % 3]) mini = 1;
  if (l[(mini + 2) % 3] > l[(2 + 2) % 3]) mini = 2;
  const double lm = l[mini], ln = l[(mini + 1) % 3], lo = l[(mini + 2) % 3];
  const double u = lm - lo, v = ln - lo, w = 3 * lo;

  const auto b = patch_ordinates(loc.triangle, mini, values, gradients);
  // cubic Bernstein expansion: order b300 b030 b003 b210 b120 b201 b021 b111 b102 b012
  const double u2 = u * u, v2 = v * v, w2 = w * w;
  return b[0] * u2 * u + b[1] * v2 * v + b[2] * w2 * w +
         3 * (b[3] * u2 * v + b[4] * u * v2 + b[5] * u2 * w + b[6] * v2 * w +
              b[8] * u * w2 + b[9] * v * w2) +
         6 * b[7] * u * v * w;
}

double CloughTocher2D::evaluate(const std::vector<double>& values,
                                const Vec2& q, double fill_value) const {
  const auto g = estimate_gradients(values);
  return evaluate_at(locate(q), values, g, fill_value);
}

std::vector<double> CloughTocher2D::interpolate(
    const std::vector<double>& values, const std::vector<NodeLocation>& locs,
    double fill_value) const {
  const auto g = estimate_gradients(values);
  std::vector<double> out(locs.size());
  for (std::size_t i = 0; i < locs.size(); ++i)
    out[i] = evaluate_at(locs[i], values, g, fill_value);
  return out;
}

}  // namespace ct
