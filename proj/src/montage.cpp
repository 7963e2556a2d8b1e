#include "ct/montage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ct {

namespace {

double norm3(const Vec3& v) {
  return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
}

Vec3 cross3(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
          a.x * b.y - a.y * b.x};
}

double dot3(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

}  // namespace

ElectrodeMontage ElectrodeMontage::from_points(std::vector<std::string> labels,
                                               std::vector<Vec3> positions,
                                               std::string center_label) {
  if (labels.size() != positions.size())
    throw std::invalid_argument("montage: label/position count mismatch");
  if (labels.empty()) throw std::invalid_argument("montage: empty");
  std::unordered_set<std::string> seen;
  for (const auto& l : labels)
    if (!seen.insert(l).second)
      throw std::invalid_argument("montage: duplicate label '" + l + "'");
  for (auto& p : positions) {
    const double n = norm3(p);
    if (n < 1e-12)
      throw std::invalid_argument("montage: zero-norm coordinate");
    p.x /= n;
    p.y /= n;
    p.z /= n;
  }
  ElectrodeMontage m;
  if (center_label.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < positions.size(); ++i)
      if (positions[i].z > positions[best].z) best = i;
    m.center_index_ = best;
    m.center_label_ = labels[best];
  } else {
    bool found = false;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == center_label) {
        m.center_index_ = i;
        found = true;
        break;
      }
    if (!found)
      throw std::invalid_argument("montage: center label '" + center_label +
                                  "' not present");
    m.center_label_ = std::move(center_label);
  }
  m.labels_ = std::move(labels);
  m.positions_ = std::move(positions);
  return m;
}

ElectrodeMontage ElectrodeMontage::from_csv(const std::string& path,
                                            std::string center_label) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("montage: cannot open " + path);
  std::vector<std::string> labels;
  std::vector<Vec3> positions;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // `label,x,y,z`
      continue;
    }
    std::istringstream ss(line);
    std::string label, xs, ys, zs;
    if (!std::getline(ss, label, ',') || !std::getline(ss, xs, ',') ||
        !std::getline(ss, ys, ',') || !std::getline(ss, zs))
      throw std::runtime_error("montage: malformed row '" + line + "'");
    Vec3 p{std::stod(xs), std::stod(ys), std::stod(zs)};
    labels.push_back(label);
    positions.push_back(p);
  }
  return from_points(std::move(labels), std::move(positions),
                     std::move(center_label));
}

ElectrodeMontage ElectrodeMontage::synthetic(std::size_t n) {
  if (n < 4) throw std::invalid_argument("montage: need at least 4 sensors");
  std::vector<std::string> labels;
  std::vector<Vec3> positions;
  labels.emplace_back("Cz");
  positions.push_back({0, 0, 1});
  // golden-angle spiral over a 100-degree polar cap
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double theta_max = 100.0 * std::numbers::pi / 180.0;
  const double cos_min = std::cos(theta_max);
  for (std::size_t i = 1; i < n; ++i) {
    const double frac =
        static_cast<double>(i) / static_cast<double>(n - 1);
    const double cz = 1.0 - frac * (1.0 - cos_min);
    const double r = std::sqrt(std::max(0.0, 1.0 - cz * cz));
    const double a = golden * static_cast<double>(i);
    char buf[32];
    std::snprintf(buf, sizeof buf, "E%03zu", i);
    labels.emplace_back(buf);
    positions.push_back({r * std::cos(a), r * std::sin(a), cz});
  }
  return from_points(std::move(labels), std::move(positions), "Cz");
}

void ElectrodeMontage::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("montage: cannot write " + path);
  out << "label,x,y,z\n";
  char buf[128];
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g\n",
                  labels_[i].c_str(), positions_[i].x, positions_[i].y,
                  positions_[i].z);
    out << buf;
  }
}

std::vector<Vec2> project_azimuthal(const ElectrodeMontage& montage,
                                    std::vector<std::string>* warnings) {
  const Vec3 c = montage.positions()[montage.center_index()];
  // tangent basis at the center; x-axis preferred so the pole maps like a map
  Vec3 u{1 - c.x * c.x, -c.x * c.y, -c.x * c.z};
  if (norm3(u) < 1e-9) u = Vec3{-c.y * c.x, 1 - c.y * c.y, -c.y * c.z};
  const double un = norm3(u);
  u = {u.x / un, u.y / un, u.z / un};
  const Vec3 v = cross3(c, u);

  std::vector<Vec2> out;
  out.reserve(montage.size());
  for (std::size_t i = 0; i < montage.size(); ++i) {
    const Vec3& e = montage.positions()[i];
    const double ca = std::clamp(dot3(c, e), -1.0, 1.0);
    const double rho = std::acos(ca);
    const double eu = dot3(e, u);
    const double ev = dot3(e, v);
    const double tangential = std::hypot(eu, ev);
    double azimuth;
    if (tangential < 1e-12) {
      azimuth = 0.0;
      if (ca < 0.0) {
        const std::string msg = "electrode '" + montage.labels()[i] +
                                "' is antipodal to the center; azimuth set to 0";
        if (warnings)
          warnings->push_back(msg);
        else
          std::cerr << "warning: " << msg << "\n";
      }
    } else {
      azimuth = std::atan2(ev, eu);
    }
    out.push_back({rho * std::cos(azimuth), rho * std::sin(azimuth)});
  }
  return out;
}

}  // namespace ct
