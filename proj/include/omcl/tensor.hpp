#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omcl/error.hpp"

namespace omcl {

int64_t numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Dense row-major tensor of 64-bit floats.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;

  // Value of a single-element tensor.
  double item() const;
};

}  // namespace omcl
