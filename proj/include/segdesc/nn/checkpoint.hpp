#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "segdesc/nn/layers.hpp"

namespace segdesc::nn {

/// Checkpoint file layout: magic "SDN1", u32 little-endian header length,
/// UTF-8 JSON header (layer kinds, shapes, hyperparameters), then all
/// parameter arrays as IEEE-754 little-endian float32 in declaration order.
struct CheckpointMeta {
  std::string regime;  // group | siamese | contrastive | pair
  std::string preset;  // default | small | custom
  int descriptor_dim = 0;
  std::array<int, 3> grid_dims{0, 0, 0};
  double voxel_size = 0.0;
  std::uint64_t seed = 0;
  nlohmann::json extra;  // free-form (class/group map, stats reference, ...)
};

void save_checkpoint(
    const std::string& path, const CheckpointMeta& meta,
    const std::vector<std::pair<std::string, const LayerStack*>>& stacks);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, LayerStack>> stacks;

  LayerStack& stack(const std::string& name);
  bool has_stack(const std::string& name) const;
};

/// Rebuilds the declared stacks and validates every parameter array against
/// the declared shapes.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace segdesc::nn
