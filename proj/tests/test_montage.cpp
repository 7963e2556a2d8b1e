#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "ct/clough_tocher.hpp"
#include "ct/delaunay.hpp"
#include "ct/mesh.hpp"
#include "ct/montage.hpp"
#include "ct/rng.hpp"

using ct::ElectrodeMontage;
using ct::Vec2;
using ct::Vec3;

namespace {

std::vector<Vec3> random_unit_vectors(std::size_t n, std::uint64_t seed) {
  ct::CounterRng rng(seed, 0);
  std::vector<Vec3> out;
  while (out.size() < n) {
    Vec3 v{rng.next_normal(), rng.next_normal(), rng.next_normal()};
    const double nm = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
    if (nm < 1e-3) continue;
    out.push_back({v.x / nm, v.y / nm, v.z / nm});
  }
  return out;
}

std::vector<std::string> number_labels(std::size_t n) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back("E" + std::to_string(i));
  return labels;
}

}  // namespace

TEST_CASE("azimuthal projection maps the center to the origin") {
  auto m = ElectrodeMontage::from_points(
      {"C", "A", "B", "D"},
      {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}, {0.3, -0.4, 0.8}}, "C");
  auto pts = ct::project_azimuthal(m);
  CHECK(pts[0].x == doctest::Approx(0.0));
  CHECK(pts[0].y == doctest::Approx(0.0));
  // equator point lands at radius pi/2 on the +x axis
  CHECK(pts[1].x == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
  CHECK(pts[1].y == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("equidistance: planar radius equals arccos of the z component") {
  auto vecs = random_unit_vectors(3, 11);
  std::vector<std::string> labels = {"center", "a", "b", "c"};
  std::vector<Vec3> pos = {{0, 0, 1}, vecs[0], vecs[1], vecs[2]};
  auto m = ElectrodeMontage::from_points(labels, pos, "center");
  auto pts = ct::project_azimuthal(m);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double radius = std::hypot(pts[i].x, pts[i].y);
    CHECK(radius == doctest::Approx(std::acos(pos[i].z)).epsilon(1e-12));
  }
}

TEST_CASE("equidistance property on 124 random unit vectors") {
  auto vecs = random_unit_vectors(124, 12);
  auto labels = number_labels(124);
  std::vector<Vec3> pos = vecs;
  pos[0] = {0, 0, 1};
  auto m = ElectrodeMontage::from_points(labels, pos, "E0");
  auto pts = ct::project_azimuthal(m);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double radius = std::hypot(pts[i].x, pts[i].y);
    const double geo = std::acos(std::clamp(pos[i].z, -1.0, 1.0));
    CHECK(std::abs(radius - geo) < 1e-9);
  }
}

TEST_CASE("projection is injective on the open hemisphere") {
  auto vecs = random_unit_vectors(400, 13);
  std::vector<Vec3> pos{{0, 0, 1}};
  for (const auto& v : vecs)
    if (v.z > 1e-6) pos.push_back(v);
  auto m =
      ElectrodeMontage::from_points(number_labels(pos.size()), pos, "E0");
  auto pts = ct::project_azimuthal(m);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      CHECK(std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y) > 1e-9);
}

TEST_CASE("antipodal electrode warns and lands at azimuth 0") {
  auto m = ElectrodeMontage::from_points(
      {"C", "S", "X"}, {{0, 0, 1}, {0, 0, -1}, {1, 0, 0}}, "C");
  std::vector<std::string> warnings;
  auto pts = ct::project_azimuthal(m, &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(pts[1].x == doctest::Approx(std::numbers::pi));
  CHECK(pts[1].y == doctest::Approx(0.0));
}

TEST_CASE("montage validation") {
  CHECK_THROWS(ElectrodeMontage::from_points({"a", "a"},
                                             {{0, 0, 1}, {1, 0, 0}}));
  CHECK_THROWS(ElectrodeMontage::from_points({"a", "b"}, {{0, 0, 1}}));
  CHECK_THROWS(
      ElectrodeMontage::from_points({"a", "b"}, {{0, 0, 1}, {0, 0, 0}}));
  CHECK_THROWS(ElectrodeMontage::from_points({"a", "b"},
                                             {{0, 0, 1}, {1, 0, 0}}, "zz"));
  // normalization + default center = topmost point
  auto m = ElectrodeMontage::from_points({"a", "b"}, {{2, 0, 0}, {0, 0, 9}});
  CHECK(m.center_label() == "b");
  for (const auto& p : m.positions())
    CHECK(std::abs(std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z) - 1.0) < 1e-9);
}

TEST_CASE("montage csv round trip") {
  auto m = ElectrodeMontage::synthetic(16);
  m.save_csv("montage_rt.csv");
  auto m2 = ElectrodeMontage::from_csv("montage_rt.csv");
  REQUIRE(m2.size() == m.size());
  CHECK(m2.center_label() == m.center_label());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(m2.labels()[i] == m.labels()[i]);
    CHECK(m2.positions()[i].x == doctest::Approx(m.positions()[i].x));
    CHECK(m2.positions()[i].z == doctest::Approx(m.positions()[i].z));
  }
}

TEST_CASE("delaunay rejects degenerate inputs") {
  CHECK_THROWS(ct::delaunay({{0, 0}, {1, 1}}));
  CHECK_THROWS(ct::delaunay({{0, 0}, {1, 1}, {2, 2}, {3, 3}}));
  CHECK_THROWS(ct::delaunay({{0, 0}, {1, 0}, {1, 0}, {0, 1}}));
}

TEST_CASE("delaunay topology matches the reference triangulation") {
  // frozen from an independent Delaunay implementation (generic positions)
  std::vector<Vec2> pts = {
      {0.17602903779079582, 0.39821749536316497},
      {-0.62369607992298803, -0.91238287250627037},
      {-0.5899620952114224, -0.78787425104746855},
      {0.45448028736890955, 0.35880104705028315},
      {-0.052308593183562957, -0.10340835103939083},
      {-0.96178610425506794, 0.50519667441715854},
      {0.20489707801625312, 0.92355515061637927},
      {0.32873729471295121, 0.21325923863735263},
      {-0.1016973701365671, -0.54929167361460896},
      {0.34034859378539117, 0.47153318490382667},
      {-0.48400872384361282, -0.80891569227926907},
      {0.92181948447335538, -0.49646542646397784}};
  const std::set<std::array<int, 3>> expected = {
      {0, 4, 5},  {0, 4, 7},  {0, 5, 6},  {0, 6, 9},  {0, 7, 9},  {1, 2, 5},
      {1, 2, 10}, {1, 10, 11}, {2, 4, 5},  {2, 4, 8},  {2, 8, 10}, {3, 6, 9},
      {3, 6, 11}, {3, 7, 9},  {3, 7, 11}, {4, 7, 11}, {4, 8, 11}, {8, 10, 11}};
  auto tri = ct::delaunay(pts);
  std::set<std::array<int, 3>> got;
  for (auto t : tri.triangles) {
    std::sort(t.begin(), t.end());
    got.insert(t);
  }
  CHECK(got == expected);
}

TEST_CASE("interpolation reproduces constants exactly in hull") {
  auto vecs = random_unit_vectors(40, 14);
  std::vector<Vec2> pts;
  for (const auto& v : vecs) pts.push_back({v.x, v.y});
  ct::CloughTocher2D interp(ct::delaunay(pts));
  std::vector<double> vals(pts.size(), 5.0);
  ct::CounterRng rng(3, 3);
  for (int k = 0; k < 60; ++k) {
    const Vec2 q{rng.next_uniform() * 2 - 1, rng.next_uniform() * 2 - 1};
    const auto loc = interp.locate(q);
    if (loc.triangle < 0) continue;
    CHECK(std::abs(interp.evaluate(vals, q) - 5.0) < 1e-9);
  }
}

TEST_CASE("interpolation reproduces affine fields within 1e-7") {
  auto vecs = random_unit_vectors(40, 15);
  std::vector<Vec2> pts;
  for (const auto& v : vecs) pts.push_back({v.x, v.y});
  ct::CloughTocher2D interp(ct::delaunay(pts));
  auto f = [](const Vec2& p) { return 2.0 * p.x - 3.0 * p.y + 1.0; };
  std::vector<double> vals;
  for (const auto& p : pts) vals.push_back(f(p));
  const auto grads = interp.estimate_gradients(vals);
  ct::CounterRng rng(4, 4);
  int tested = 0;
  for (int k = 0; k < 200 && tested < 50; ++k) {
    const Vec2 q{rng.next_uniform() * 2 - 1, rng.next_uniform() * 2 - 1};
    const auto loc = interp.locate(q);
    if (loc.triangle < 0) continue;
    ++tested;
    CHECK(std::abs(interp.evaluate_at(loc, vals, grads, 0.0) - f(q)) < 1e-7);
  }
  CHECK(tested >= 30);
}

TEST_CASE("out-of-hull nodes take the fill value") {
  std::vector<Vec2> pts = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  ct::CloughTocher2D interp(ct::delaunay(pts));
  std::vector<double> vals{1, 2, 3, 4};
  CHECK(interp.evaluate(vals, {5.0, 5.0}, 0.0) == 0.0);
  CHECK(interp.evaluate(vals, {-3.0, 0.2}, 0.0) == 0.0);
}

TEST_CASE("interpolation matches the reference pipeline bit-for-bit-ish") {
  // frozen expected values computed with an independent implementation of
  // the same scheme (tightly converged gradient estimate)
  std::vector<Vec2> pts = {
      {0.17602903779079582, 0.39821749536316497},
      {-0.62369607992298803, -0.91238287250627037},
      {-0.5899620952114224, -0.78787425104746855},
      {0.45448028736890955, 0.35880104705028315},
      {-0.052308593183562957, -0.10340835103939083},
      {-0.96178610425506794, 0.50519667441715854},
      {0.20489707801625312, 0.92355515061637927},
      {0.32873729471295121, 0.21325923863735263},
      {-0.1016973701365671, -0.54929167361460896},
      {0.34034859378539117, 0.47153318490382667},
      {-0.48400872384361282, -0.80891569227926907},
      {0.92181948447335538, -0.49646542646397784}};
  std::vector<double> vals = {
      0.84898458416260991,   -1.3278764707058925, -0.94479521936445454,
      1.3867831748122834,    0.19648133941871265, -1.0545697154133808,
      0.22415344427203399,   0.88282782333474064, -0.063698855232950491,
      0.52030407120508415,   -0.97478282852220299, 1.3775132818646558};
  std::vector<Vec2> queries = {{0.1, 0.2},   {-0.4, 0.3}, {0.55, -0.2},
                               {0.0, 0.0},   {-0.7, -0.6}, {0.3, 0.62},
                               {2.0, 2.0},   {-0.95, 0.9}, {0.18, -0.73},
                               {0.42, 0.31}};
  std::vector<double> expected = {
      0.78950031674622789, 0.19979310515996615, 1.0649076264157495,
      0.38798086774706458, 0.0,                 0.19769280587666602,
      0.0,                 0.0,                 0.0,
      1.218923983600781};
  ct::CloughTocher2D interp(ct::delaunay(pts));
  const auto grads =
      interp.estimate_gradients(vals, /*max_iter=*/5000, /*tol=*/1e-15);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const double got = interp.evaluate_at(interp.locate(queries[i]), vals,
                                          grads, 0.0);
    CHECK(got == doctest::Approx(expected[i]).epsilon(1e-9));
  }

  // same geometry with prescribed gradients isolates the patch construction
  std::vector<double> injected = {
      0.68923916666265961,  0.75725236527629192,   -1.4305497703198065,
      -0.42887929893319299, -0.68501185777996376,  -0.12564086405458477,
      1.1445872397183663,   0.32720978585615806,   -0.13672744047703364,
      0.17919391252641817,  0.96897707222486817,   0.0058700904330425971,
      0.59050544164317309,  -0.3924763735193495,   0.035911467207294483,
      -0.33075495295277624, 0.8087760735049444,    0.053310944342342147,
      -1.3189020086833085,  -1.0797806954220246,   -0.37596827385826004,
      0.14872676726837805,  1.8149188413533812,    0.55249893512764947};
  std::vector<double> expected2 = {
      0.56479418915029833, -0.10232984934740086, 0.91709362766709601,
      0.25966638195923586, 0.0,                  0.42346753379925112,
      0.0,                 0.0,                  0.0,
      1.2493615151916901};
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const double got = interp.evaluate_at(interp.locate(queries[i]), vals,
                                          injected, 0.0);
    CHECK(got == doctest::Approx(expected2[i]).epsilon(1e-11));
  }
}

TEST_CASE("interpolant is C1 across macro edges") {
  std::vector<Vec2> pts = {{0, 0}, {1, 0.2}, {0.3, 1.1}, {0.6, -0.9}, {1.4, 0.9}};
  ct::CloughTocher2D interp(ct::delaunay(pts));
  ct::CounterRng rng(6, 6);
  std::vector<double> vals(pts.size());
  for (auto& v : vals) v = rng.next_normal();
  const auto grads = interp.estimate_gradients(vals);
  // directional derivative across the edge between points 0 and 1
  const double h = 1e-6;
  for (double s : {0.3, 0.5, 0.7}) {
    const Vec2 p{pts[0].x + s * (pts[1].x - pts[0].x),
                 pts[0].y + s * (pts[1].y - pts[0].y)};
    const Vec2 t{pts[1].x - pts[0].x, pts[1].y - pts[0].y};
    const double tn = std::hypot(t.x, t.y);
    const Vec2 nrm{-t.y / tn, t.x / tn};
    auto val = [&](double off) {
      return interp.evaluate_at(
          interp.locate({p.x + off * nrm.x, p.y + off * nrm.y}), vals, grads,
          0.0);
    };
    const double dplus = (val(2 * h) - val(h)) / h;
    const double dminus = (val(-h) - val(-2 * h)) / h;
    CHECK(std::abs(dplus - dminus) < 1e-4);
  }
}

TEST_CASE("border crop") {
  // 34x34 -> 32x32
  std::vector<double> field(34 * 34, 1.0);
  auto cropped = ct::border_crop(field, 34, 34);
  CHECK(cropped.size() == 32 * 32);

  std::vector<double> tiny(9, 0.0);
  tiny[4] = 7.0;
  auto one = ct::border_crop(tiny, 3, 3);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == 7.0);

  ct::CounterRng rng(8, 8);
  std::vector<double> rnd(6 * 5);
  for (auto& v : rnd) v = rng.next_normal();
  auto c = ct::border_crop(rnd, 6, 5);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(c[i * 3 + j] == rnd[(i + 1) * 5 + (j + 1)]);

  CHECK_THROWS(ct::border_crop(std::vector<double>(4, 0.0), 2, 2));
}

TEST_CASE("trial_to_frames: shape, constants, per-frame oracle, linearity") {
  auto montage = ElectrodeMontage::synthetic(32);
  ct::MeshProjector proj(montage, 12);
  REQUIRE(proj.mesh_size() == 10);
  const std::size_t ch = montage.size(), frames = 4;

  // channel-count mismatch
  CHECK_THROWS(proj.trial_to_frames(std::vector<double>(5, 0.0), 1));

  // constant trial reproduces the constant at every in-hull node
  std::vector<double> ctrial(ch * frames, 3.25);
  auto stack = proj.trial_to_frames(ctrial, frames);
  CHECK(stack.m1 == 10);
  CHECK(stack.m2 == 10);
  CHECK(stack.frames == frames);
  std::size_t in_hull = 0;
  for (std::size_t i = 0; i < stack.m1; ++i)
    for (std::size_t j = 0; j < stack.m2; ++j)
      for (std::size_t t = 0; t < frames; ++t) {
        const double v = stack.at(i, j, t);
        if (v != 0.0) {
          ++in_hull;
          CHECK(v == doctest::Approx(3.25).epsilon(1e-9));
        }
      }
  CHECK(in_hull > stack.m1 * stack.m2);  // most of the cap is covered

  // single frame equals interpolate + crop of that frame's channel vector
  ct::CounterRng rng(9, 9);
  std::vector<double> trial(ch * frames);
  for (auto& v : trial) v = rng.next_normal();
  auto st = proj.trial_to_frames(trial, frames);
  const std::size_t f = 2;
  std::vector<double> frame_vals(ch);
  for (std::size_t c = 0; c < ch; ++c) frame_vals[c] = trial[c * frames + f];
  auto field = proj.project_frame(frame_vals);
  auto cropped = ct::border_crop(field, proj.grid_size(), proj.grid_size());
  for (std::size_t i = 0; i < st.m1; ++i)
    for (std::size_t j = 0; j < st.m2; ++j)
      CHECK(st.at(i, j, f) == doctest::Approx(cropped[i * st.m2 + j]));

  // linearity in the trial values
  std::vector<double> trial2(ch * frames), mix(ch * frames);
  for (auto& v : trial2) v = rng.next_normal();
  const double a = 0.6, b = -1.7;
  for (std::size_t i = 0; i < mix.size(); ++i)
    mix[i] = a * trial[i] + b * trial2[i];
  auto s1 = proj.trial_to_frames(trial, frames);
  auto s2 = proj.trial_to_frames(trial2, frames);
  auto sm = proj.trial_to_frames(mix, frames);
  for (std::size_t i = 0; i < sm.data.size(); ++i)
    CHECK(std::abs(sm.data[i] - (a * s1.data[i] + b * s2.data[i])) < 1e-6);
}
