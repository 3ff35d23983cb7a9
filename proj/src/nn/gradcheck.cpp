#include "segdesc/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "segdesc/rng.hpp"

namespace segdesc::nn {

double gradient_check(LayerStack& stack, const LossProbe& loss,
                      const Tensor& input, const GradCheckOptions& opts) {
  // Analytic gradients first.
  stack.zero_grads();
  Tensor out = stack.forward(input, Mode::train);
  stack.backward(loss.grad(out));

  std::vector<ParamView> params = stack.params();
  std::vector<std::pair<std::size_t, std::size_t>> coords;  // (view, element)
  for (std::size_t v = 0; v < params.size(); ++v) {
    for (std::size_t e = 0; e < params[v].values->size(); ++e) {
      coords.emplace_back(v, e);
    }
  }
  if (coords.size() > opts.max_params) {
    rng::Engine engine(opts.seed);
    const auto picked = engine.sample_indices(coords.size(), opts.max_params);
    std::vector<std::pair<std::size_t, std::size_t>> subset;
    subset.reserve(picked.size());
    for (std::size_t i : picked) subset.push_back(coords[i]);
    coords = std::move(subset);
  }

  double worst = 0.0;
  for (const auto& [v, e] : coords) {
    double& w = (*params[v].values)[e];
    const double analytic = (*params[v].grads)[e];
    const double saved = w;
    w = saved + opts.step;
    const double up = loss.value(stack.forward(input, Mode::infer));
    w = saved - opts.step;
    const double down = loss.value(stack.forward(input, Mode::infer));
    w = saved;
    const double numeric = (up - down) / (2.0 * opts.step);
    const double err = std::abs(analytic - numeric) /
                       std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace segdesc::nn
