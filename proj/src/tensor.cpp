#include "mixedseg/tensor.hpp"

#include <sstream>

namespace mixedseg {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool shape_equal(const Shape& a, const Shape& b) { return a == b; }

Tensor::Tensor(Shape shape, std::vector<Real> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  d_ = std::make_shared<TensorData>();
  d_->shape = std::move(shape);
  d_->values = std::move(values);
  d_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<Real> v(shape_numel(shape), Real(0));
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  std::vector<Real> v(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<Real>{value}, requires_grad);
}

Real Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() requires a scalar tensor, got " + shape_str(shape()));
  }
  return d_->values[0];
}

}  // namespace mixedseg
