#include "segdesc/nn/tensor.hpp"

#include <stdexcept>

namespace segdesc::nn {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (shape_size(shape) != values.size()) {
    throw std::invalid_argument("Tensor: value count " +
                                std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
}

Tensor Tensor::zeros(const Shape& s) {
  Tensor t;
  t.shape = s;
  t.values.assign(shape_size(s), 0.0);
  return t;
}

Shape batched(std::size_t n, const Shape& per_sample) {
  Shape s;
  s.reserve(per_sample.size() + 1);
  s.push_back(n);
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

}  // namespace segdesc::nn
