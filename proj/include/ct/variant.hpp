#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ct {

// Architecture sizes. The three named variants derive every width from the
// head count: C = H*D, E = C*H/2, F = 64*H. The wide variant uses D = C/H =
// 6 (its published per-head width of 8 is inconsistent with C = 72, H = 12;
// D = C/H reproduces the published parameter totals).
struct VariantConfig {
  std::string name = "custom";
  std::size_t heads = 4;
  std::size_t head_dim = 2;           // D
  std::size_t local_channels = 8;     // C
  std::size_t expanded_channels = 16; // E
  std::size_t final_channels = 256;   // F
  std::size_t num_classes = 6;        // K
  std::size_t time_frames = 32;       // T
  std::size_t mesh_size = 32;         // M1 = M2
  std::size_t spatial_kernel = 8;     // km = km'
  std::size_t spatial_stride = 4;     // s
  std::size_t fc1 = 500;
  std::size_t fc2 = 100;

  std::size_t patch_grid() const {
    return (mesh_size - spatial_kernel) / spatial_stride + 1;
  }
  std::size_t patches() const { return patch_grid() * patch_grid(); }

  void validate() const {
    if (heads == 0 || head_dim == 0)
      throw std::invalid_argument("variant: heads and head_dim must be > 0");
    if (local_channels != heads * head_dim)
      throw std::invalid_argument("variant: C must equal H*D");
    if (local_channels % 2 || expanded_channels % 2 || final_channels % 2)
      throw std::invalid_argument(
          "variant: C, E, F must be even (channels split over two kernel "
          "lengths)");
    if (num_classes < 2)
      throw std::invalid_argument("variant: need at least 2 classes");
    if (time_frames == 0) throw std::invalid_argument("variant: T must be > 0");
    if (spatial_stride == 0 || spatial_kernel == 0 ||
        spatial_kernel > mesh_size)
      throw std::invalid_argument("variant: bad spatial kernel/stride");
    if (fc1 == 0 || fc2 == 0)
      throw std::invalid_argument("variant: classifier widths must be > 0");
  }

  static VariantConfig derived(std::string name, std::size_t heads,
                               std::size_t head_dim, std::size_t classes,
                               std::size_t t) {
    VariantConfig cfg;
    cfg.name = std::move(name);
    cfg.heads = heads;
    cfg.head_dim = head_dim;
    cfg.local_channels = heads * head_dim;
    if ((cfg.local_channels * heads) % 2)
      throw std::invalid_argument("variant: C*H must be even");
    cfg.expanded_channels = cfg.local_channels * heads / 2;
    cfg.final_channels = 64 * heads;
    cfg.num_classes = classes;
    cfg.time_frames = t;
    cfg.validate();
    return cfg;
  }

  static VariantConfig slim(std::size_t classes, std::size_t t = 32) {
    return derived("slim", 4, 2, classes, t);
  }
  static VariantConfig fit(std::size_t classes, std::size_t t = 32) {
    return derived("fit", 8, 4, classes, t);
  }
  static VariantConfig wide(std::size_t classes, std::size_t t = 32) {
    return derived("wide", 12, 6, classes, t);
  }

  static VariantConfig by_name(const std::string& name, std::size_t classes,
                               std::size_t t = 32) {
    if (name == "slim") return slim(classes, t);
    if (name == "fit") return fit(classes, t);
    if (name == "wide") return wide(classes, t);
    throw std::invalid_argument("unknown variant '" + name +
                                "' (expected slim|fit|wide)");
  }

  // Head-sweep mode: change H keeping D fixed; every derived width follows.
  VariantConfig with_heads(std::size_t new_heads) const {
    auto cfg = derived(name + "-h" + std::to_string(new_heads), new_heads,
                       head_dim, num_classes, time_frames);
    cfg.mesh_size = mesh_size;
    cfg.spatial_kernel = spatial_kernel;
    cfg.spatial_stride = spatial_stride;
    cfg.fc1 = fc1;
    cfg.fc2 = fc2;
    cfg.validate();
    return cfg;
  }
};

}  // namespace ct
