#pragma once

#include <cstdint>
#include <functional>

#include "segdesc/nn/layers.hpp"
#include "segdesc/nn/tensor.hpp"

namespace segdesc::nn {

/// Scalar loss over the stack output, with its analytic gradient.
struct LossProbe {
  std::function<double(const Tensor&)> value;
  std::function<Tensor(const Tensor&)> grad;
};

struct GradCheckOptions {
  double step = 1e-3;
  /// Above this parameter count a seeded sample of max_params is checked.
  std::size_t max_params = 256;
  std::uint64_t seed = 7;
};

/// Compares analytic parameter gradients against central finite differences
/// and returns max over checked parameters of |ga - gn| / max(1e-8, |ga|+|gn|).
/// The stack must be dropout-free (or rate 0) so both paths see the same
/// function.
double gradient_check(LayerStack& stack, const LossProbe& loss,
                      const Tensor& input,
                      const GradCheckOptions& opts = GradCheckOptions{});

}  // namespace segdesc::nn
