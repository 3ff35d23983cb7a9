#pragma once

#include <utility>
#include <vector>

#include "segdesc/nn/tensor.hpp"

namespace segdesc::nn {

/// Cross-entropy of one softmax output row. The returned gradient is with
/// respect to the pre-softmax logits (probs - onehot), the fused form that
/// pairs with LayerStack::backward_fused_final.
struct CategoricalCeResult {
  double loss;
  std::vector<double> grad_logits;
};
CategoricalCeResult loss_categorical_ce(const std::vector<double>& probs,
                                        int class_index);

/// Mean cross-entropy over a batch of softmax rows; grad_logits is already
/// divided by the batch size. correct counts argmax hits.
struct BatchCeResult {
  double mean_loss;
  Tensor grad_logits;
  int correct;
};
BatchCeResult batch_softmax_ce(const Tensor& probs,
                               const std::vector<int>& labels);

/// Binary cross-entropy of a probability p against label y; the gradient is
/// with respect to p after clamping to [1e-7, 1-1e-7].
struct BinaryCeResult {
  double loss;
  double grad;
};
BinaryCeResult loss_binary_ce(double p, int y);

/// Same loss expressed against the pre-sigmoid activation z (numerically
/// stable fused form; grad = sigmoid(z) - y).
BinaryCeResult loss_binary_ce_logit(double z, int y);

/// Contrastive loss on a descriptor pair:
///   y * d2 + (1 - y) * max(0, margin - d2),  d2 = |f_a - f_b|^2.
/// The margin applies to the squared Euclidean distance.
struct ContrastiveResult {
  double loss;
  double squared_distance;
  std::vector<double> grad_a;
  std::vector<double> grad_b;
};
ContrastiveResult loss_contrastive(const std::vector<double>& f_a,
                                   const std::vector<double>& f_b, int y,
                                   double margin);

}  // namespace segdesc::nn
