#pragma once

#include <memory>
#include <span>
#include <vector>

#include "ct/clough_tocher.hpp"
#include "ct/montage.hpp"

namespace ct {

struct GridExtent {
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
};

// Border-cropped activity meshes for one trial: 1 x M1 x M2 x T, row index
// descending in y (top row = max y), column index ascending in x.
struct MeshFrameStack {
  std::size_t m1 = 0, m2 = 0, frames = 0;
  std::vector<double> data;  // 1 x m1 x m2 x frames, row-major
  GridExtent grid_extent;

  double at(std::size_t i, std::size_t j, std::size_t t) const {
    return data[(i * m2 + j) * frames + t];
  }
};

// Removes the outermost one-node frame of a g1 x g2 field.
std::vector<double> border_crop(const std::vector<double>& field,
                                std::size_t g1, std::size_t g2);

// Shared, thread-safe projection pipeline: the azimuthal projection, the
// triangulation, and the grid-node locations are computed once per montage
// and grid size.
class MeshProjector {
 public:
  MeshProjector(const ElectrodeMontage& montage, std::size_t g1);

  std::size_t grid_size() const { return g1_; }
  std::size_t mesh_size() const { return g1_ - 2; }
  std::size_t channels() const { return n_; }
  const GridExtent& extent() const { return extent_; }
  const CloughTocher2D& interpolator() const { return *ct_; }

  // One interpolated g1 x g1 field (no crop) from per-channel values.
  std::vector<double> project_frame(std::span<const double> values) const;

  // trial: channels x frames, row-major; output 1 x (g1-2) x (g1-2) x frames.
  MeshFrameStack trial_to_frames(std::span<const double> trial,
                                 std::size_t frames) const;

 private:
  std::size_t g1_ = 0, n_ = 0;
  GridExtent extent_;
  std::unique_ptr<CloughTocher2D> ct_;
  std::vector<CloughTocher2D::NodeLocation> node_locs_;  // g1*g1, row-major
  std::vector<double> grad_op_;  // (2n x n) gradients = grad_op . values
};

}  // namespace ct
