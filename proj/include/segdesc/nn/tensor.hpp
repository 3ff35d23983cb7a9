#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace segdesc::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense row-major tensor of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> v);

  static Tensor zeros(const Shape& s);

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

/// Shape with a leading batch dimension prepended.
Shape batched(std::size_t n, const Shape& per_sample);

}  // namespace segdesc::nn
