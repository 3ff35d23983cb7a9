#include "segdesc/nn/optimizer.hpp"

#include <stdexcept>

namespace segdesc::nn {

void SgdConfig::validate() const {
  if (learning_rate <= 0.0) {
    throw std::invalid_argument("SgdConfig: learning_rate must be > 0");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("SgdConfig: momentum must be in [0, 1)");
  }
  if (batch_size < 1) {
    throw std::invalid_argument("SgdConfig: batch_size must be >= 1");
  }
  if (epochs < 1) {
    throw std::invalid_argument("SgdConfig: epochs must be >= 1");
  }
}

SgdOptimizer::SgdOptimizer(const SgdConfig& cfg, std::vector<LayerStack*> stacks)
    : cfg_(cfg), stacks_(std::move(stacks)) {
  cfg_.validate();
  for (LayerStack* stack : stacks_) {
    for (const ParamView& p : stack->params()) {
      velocities_.emplace_back(p.values->size(), 0.0);
    }
  }
}

void SgdOptimizer::step() {
  std::size_t slot = 0;
  for (LayerStack* stack : stacks_) {
    for (const ParamView& p : stack->params()) {
      std::vector<double>& v = velocities_[slot++];
      if (v.size() != p.values->size() || p.grads->size() != p.values->size()) {
        throw std::invalid_argument(
            "SgdOptimizer: parameter shape changed under the optimizer (" +
            p.name + ")");
      }
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = cfg_.momentum * v[i] + (*p.grads)[i];
        (*p.values)[i] -= cfg_.learning_rate * v[i];
      }
    }
  }
}

}  // namespace segdesc::nn
