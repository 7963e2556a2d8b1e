#include "ct/mesh.hpp"

#include <cmath>
#include <stdexcept>

namespace ct {

std::vector<double> border_crop(const std::vector<double>& field,
                                std::size_t g1, std::size_t g2) {
  if (g1 < 3 || g2 < 3)
    throw std::invalid_argument("border_crop: grid must be at least 3x3");
  if (field.size() != g1 * g2)
    throw std::invalid_argument("border_crop: field size mismatch");
  std::vector<double> out((g1 - 2) * (g2 - 2));
  for (std::size_t i = 0; i + 2 < g1; ++i)
    for (std::size_t j = 0; j + 2 < g2; ++j)
      out[i * (g2 - 2) + j] = field[(i + 1) * g2 + (j + 1)];
  return out;
}

MeshProjector::MeshProjector(const ElectrodeMontage& montage, std::size_t g1)
    : g1_(g1), n_(montage.size()) {
  if (g1 < 3) throw std::invalid_argument("mesh: grid must be at least 3x3");
  const auto pts = project_azimuthal(montage);
  extent_.xmin = extent_.xmax = pts[0].x;
  extent_.ymin = extent_.ymax = pts[0].y;
  for (const auto& p : pts) {
    extent_.xmin = std::min(extent_.xmin, p.x);
    extent_.xmax = std::max(extent_.xmax, p.x);
    extent_.ymin = std::min(extent_.ymin, p.y);
    extent_.ymax = std::max(extent_.ymax, p.y);
  }
  ct_ = std::make_unique<CloughTocher2D>(delaunay(pts));

  node_locs_.resize(g1_ * g1_);
  const double dx = (extent_.xmax - extent_.xmin) / static_cast<double>(g1_ - 1);
  const double dy = (extent_.ymax - extent_.ymin) / static_cast<double>(g1_ - 1);
  for (std::size_t i = 0; i < g1_; ++i) {
    const double y = extent_.ymax - static_cast<double>(i) * dy;
    for (std::size_t j = 0; j < g1_; ++j) {
      const double x = extent_.xmin + static_cast<double>(j) * dx;
      node_locs_[i * g1_ + j] = ct_->locate({x, y});
    }
  }

  // gradient estimation is linear in the values; precompute its matrix
  grad_op_.assign(2 * n_ * n_, 0.0);
  std::vector<double> unit(n_, 0.0);
  for (std::size_t c = 0; c < n_; ++c) {
    unit[c] = 1.0;
    const auto g = ct_->estimate_gradients(unit);
    unit[c] = 0.0;
    for (std::size_t r = 0; r < 2 * n_; ++r) grad_op_[r * n_ + c] = g[r];
  }
}

std::vector<double> MeshProjector::project_frame(
    std::span<const double> values) const {
  if (values.size() != n_)
    throw std::invalid_argument("mesh: channel count mismatch");
  std::vector<double> vals(values.begin(), values.end());
  std::vector<double> grads(2 * n_, 0.0);
  for (std::size_t r = 0; r < 2 * n_; ++r) {
    double acc = 0.0;
    const double* row = grad_op_.data() + r * n_;
    for (std::size_t c = 0; c < n_; ++c) acc += row[c] * vals[c];
    grads[r] = acc;
  }
  std::vector<double> field(g1_ * g1_);
  for (std::size_t k = 0; k < node_locs_.size(); ++k)
    field[k] = ct_->evaluate_at(node_locs_[k], vals, grads, 0.0);
  return field;
}

MeshFrameStack MeshProjector::trial_to_frames(std::span<const double> trial,
                                              std::size_t frames) const {
  if (trial.size() != n_ * frames)
    throw std::invalid_argument(
        "mesh: trial size does not match channels x frames");
  MeshFrameStack stack;
  stack.m1 = stack.m2 = mesh_size();
  stack.frames = frames;
  stack.grid_extent = extent_;
  stack.data.assign(stack.m1 * stack.m2 * frames, 0.0);
  std::vector<double> values(n_);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < n_; ++c) values[c] = trial[c * frames + f];
    const auto field = project_frame(values);
    const auto cropped = border_crop(field, g1_, g1_);
    for (std::size_t i = 0; i < stack.m1; ++i)
      for (std::size_t j = 0; j < stack.m2; ++j)
        stack.data[(i * stack.m2 + j) * frames + f] =
            cropped[i * stack.m2 + j];
  }
  for (double v : stack.data)
    if (!std::isfinite(v))
      throw std::runtime_error("mesh: non-finite interpolated value");
  return stack;
}

}  // namespace ct
