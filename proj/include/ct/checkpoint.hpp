#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ct/model.hpp"
#include "ct/tensor.hpp"

namespace ct {

// Binary parameter container: magic `CTCK`, u32 version, little-endian;
// repeated (u32 name length, name, u32 rank, u64 extents, f32 payload).
struct CheckpointEntry {
  Shape shape;
  std::vector<float> values;
};

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, CheckpointEntry>>&
                         entries);

std::vector<std::pair<std::string, CheckpointEntry>> load_checkpoint(
    const std::string& path);

// Parameters plus BatchNorm running statistics, in registration order.
template <typename T>
std::vector<std::pair<std::string, CheckpointEntry>> snapshot_model(
    ConvTransformerModel<T>& model);

template <typename T>
void save_model(const std::string& path, ConvTransformerModel<T>& model);

// Throws when a parameter is missing or a shape disagrees.
template <typename T>
void load_model(const std::string& path, ConvTransformerModel<T>& model);

}  // namespace ct
