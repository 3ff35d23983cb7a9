#include "segdesc/nn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace segdesc::nn {

CategoricalCeResult loss_categorical_ce(const std::vector<double>& probs,
                                        int class_index) {
  if (class_index < 0 || static_cast<std::size_t>(class_index) >= probs.size()) {
    throw std::invalid_argument("loss_categorical_ce: class index " +
                                std::to_string(class_index) +
                                " out of range for width " +
                                std::to_string(probs.size()));
  }
  CategoricalCeResult r;
  r.loss = -std::log(probs[class_index] + 1e-12);
  r.grad_logits = probs;
  r.grad_logits[class_index] -= 1.0;
  return r;
}

BatchCeResult batch_softmax_ce(const Tensor& probs,
                               const std::vector<int>& labels) {
  if (probs.shape.size() != 2) {
    throw std::invalid_argument("batch_softmax_ce: expects (n, classes)");
  }
  const std::size_t n = probs.shape[0];
  const std::size_t k = probs.shape[1];
  if (labels.size() != n) {
    throw std::invalid_argument("batch_softmax_ce: label count mismatch");
  }
  BatchCeResult r;
  r.mean_loss = 0.0;
  r.correct = 0;
  r.grad_logits = Tensor::zeros(probs.shape);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = probs.values.data() + i * k;
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw std::invalid_argument("batch_softmax_ce: label out of range");
    }
    r.mean_loss -= std::log(row[label] + 1e-12) * inv_n;
    double* g = r.grad_logits.values.data() + i * k;
    std::size_t argmax = 0;
    for (std::size_t j = 0; j < k; ++j) {
      g[j] = row[j] * inv_n;
      if (row[j] > row[argmax]) argmax = j;
    }
    g[label] -= inv_n;
    r.correct += argmax == static_cast<std::size_t>(label);
  }
  return r;
}

BinaryCeResult loss_binary_ce(double p, int y) {
  const double c = std::clamp(p, 1e-7, 1.0 - 1e-7);
  BinaryCeResult r;
  r.loss = -(y * std::log(c) + (1 - y) * std::log(1.0 - c));
  r.grad = (c - y) / (c * (1.0 - c));
  return r;
}

BinaryCeResult loss_binary_ce_logit(double z, int y) {
  // loss = softplus(z) - y*z, computed without overflow
  BinaryCeResult r;
  const double p = 1.0 / (1.0 + std::exp(-z));
  r.loss = (z > 0.0 ? z : 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
  r.grad = p - y;
  return r;
}

ContrastiveResult loss_contrastive(const std::vector<double>& f_a,
                                   const std::vector<double>& f_b, int y,
                                   double margin) {
  if (f_a.size() != f_b.size()) {
    throw std::invalid_argument("loss_contrastive: descriptor dims differ (" +
                                std::to_string(f_a.size()) + " vs " +
                                std::to_string(f_b.size()) + ")");
  }
  if (margin <= 0.0) {
    throw std::invalid_argument("loss_contrastive: margin must be > 0");
  }
  ContrastiveResult r;
  const std::size_t d = f_a.size();
  double d2 = 0.0;
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < d; ++i) {
    diff[i] = f_a[i] - f_b[i];
    d2 += diff[i] * diff[i];
  }
  r.squared_distance = d2;
  r.grad_a.assign(d, 0.0);
  r.grad_b.assign(d, 0.0);
  if (y == 1) {
    r.loss = d2;
    for (std::size_t i = 0; i < d; ++i) {
      r.grad_a[i] = 2.0 * diff[i];
      r.grad_b[i] = -2.0 * diff[i];
    }
  } else {
    const double hinge = margin - d2;
    if (hinge > 0.0) {
      r.loss = hinge;
      for (std::size_t i = 0; i < d; ++i) {
        r.grad_a[i] = -2.0 * diff[i];
        r.grad_b[i] = 2.0 * diff[i];
      }
    } else {
      r.loss = 0.0;
    }
  }
  return r;
}

}  // namespace segdesc::nn
