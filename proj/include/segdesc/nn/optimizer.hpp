#pragma once

#include <cstdint>
#include <vector>

#include "segdesc/nn/layers.hpp"

namespace segdesc::nn {

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Momentum SGD over one or more stacks:
///   v <- momentum * v + grad;  w <- w - learning_rate * v
/// Gradients are taken from the stacks' accumulated buffers; callers zero
/// them per batch.
class SgdOptimizer {
 public:
  SgdOptimizer(const SgdConfig& cfg, std::vector<LayerStack*> stacks);

  void step();

 private:
  SgdConfig cfg_;
  std::vector<LayerStack*> stacks_;
  std::vector<std::vector<double>> velocities_;  // one per ParamView, in order
};

}  // namespace segdesc::nn
