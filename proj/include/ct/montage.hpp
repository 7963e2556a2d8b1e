#pragma once

#include <string>
#include <vector>

namespace ct {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

struct Vec2 {
  double x = 0, y = 0;
};

// Named sensor positions on the unit sphere. Input coordinates are divided
// by their norms; the projection center is the topmost scalp point unless a
// center label is given explicitly.
class ElectrodeMontage {
 public:
  static ElectrodeMontage from_points(std::vector<std::string> labels,
                                      std::vector<Vec3> positions,
                                      std::string center_label = "");

  // CSV with header `label,x,y,z`; comment lines start with '#'.
  static ElectrodeMontage from_csv(const std::string& path,
                                   std::string center_label = "");

  // Deterministic spiral cap of n sensors; sensor 0 sits at the pole and is
  // the projection center.
  static ElectrodeMontage synthetic(std::size_t n);

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<Vec3>& positions() const { return positions_; }
  const std::string& center_label() const { return center_label_; }
  std::size_t center_index() const { return center_index_; }

  void save_csv(const std::string& path) const;

 private:
  std::vector<std::string> labels_;
  std::vector<Vec3> positions_;
  std::string center_label_;
  std::size_t center_index_ = 0;
};

// Azimuthal equidistant projection about the montage center: planar radius
// equals the great-circle distance from the center, azimuth equals the
// longitude about the center axis. The center maps to the origin. A sensor
// antipodal to the center has no defined azimuth; it is placed at azimuth 0
// and a warning is recorded.
std::vector<Vec2> project_azimuthal(const ElectrodeMontage& montage,
                                    std::vector<std::string>* warnings = nullptr);

}  // namespace ct
