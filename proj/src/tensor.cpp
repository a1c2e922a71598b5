#include "omcl/tensor.hpp"

#include <cmath>
#include <sstream>

namespace omcl {

int64_t numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (numel(shape) != static_cast<int64_t>(data.size()))
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match buffer of " +
                     std::to_string(data.size()) + " values");
}

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  t.data.assign(static_cast<size_t>(numel(shape)), 0.0);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t;
  t.data.assign(static_cast<size_t>(numel(shape)), value);
  t.shape = std::move(shape);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::item() const {
  if (data.size() != 1)
    throw ShapeError("item() on tensor of shape " + shape_str(shape));
  return data[0];
}

}  // namespace omcl
