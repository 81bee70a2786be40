#ifndef MIXEDSEG_TENSOR_HPP_
#define MIXEDSEG_TENSOR_HPP_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mixedseg/errors.hpp"

namespace mixedseg {

#ifdef MIXEDSEG_REAL32
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool shape_equal(const Shape& a, const Shape& b);

struct TensorData {
  Shape shape;
  std::vector<Real> values;
  bool requires_grad = false;
  std::vector<Real> grad;  // empty until first accumulation

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), Real(0));
  }
};

// Shared handle to a dense row-major array. Shape is fixed at construction;
// values are written in place by initializers and optimizer updates, grad is
// the only buffer mutated during backward.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t ndim() const { return d_->shape.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape[i]; }
  std::size_t numel() const { return d_->values.size(); }

  std::span<Real> values() { return d_->values; }
  std::span<const Real> values() const { return d_->values; }
  Real item() const;

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    d_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return d_->has_grad(); }
  // Allocates a zero grad buffer on first use.
  std::span<Real> grad() {
    d_->ensure_grad();
    return d_->grad;
  }
  std::span<const Real> grad_view() const { return d_->grad; }
  void zero_grad() {
    if (d_->has_grad()) std::fill(d_->grad.begin(), d_->grad.end(), Real(0));
  }
  void clear_grad() { d_->grad.clear(); }

  const std::shared_ptr<TensorData>& ptr() const { return d_; }
  bool same_data(const Tensor& other) const { return d_ == other.d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

}  // namespace mixedseg

#endif  // MIXEDSEG_TENSOR_HPP_
